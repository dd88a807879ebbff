//! Regenerates the datasets under `fixtures/data/` from the mini-project and
//! the synthetic corpus generator.
//!
//! ```text
//! cargo run --example fixture_data
//! ```

use std::path::Path;

use steertest::artifact::write_jsonl;
use steertest::config::PipelineConfig;
use steertest::dataset::MethodRecord;
use steertest::pipeline::{method_prompt, project_methods};
use steertest::profiler::ProfilingItem;
use steertest::steer::DecoderExample;
use steertest::synth::{detector_corpus, SynthConfig};

/// Short clean methods unlike the planted corpus, so that accessors are not
/// flagged just for being unfamiliar.
const CLEAN: &[&str] = &[
    "public int size() {\n    return count;\n}\n",
    "public boolean isEmpty() {\n    return count == 0;\n}\n",
    "public int head(int[] items) {\n    return items[0];\n}\n",
    "public int get(int[] data, int i) {\n    return data[i];\n}\n",
    "public String name() {\n    return label;\n}\n",
    "public int area() {\n    return width * height;\n}\n",
    "public boolean has(int x) {\n    return low <= x && x <= high;\n}\n",
    "public long elapsed() {\n    return end - start;\n}\n",
];

/// Short accessors reading one element, as (name, array); each appears
/// once indexing at `.length` (defective) and once at `.length - 1`.
const ACCESSORS: &[(&str, &str)] = &[
    ("top", "stack"),
    ("tail", "data"),
    ("peek", "items"),
    ("newest", "buffer"),
    ("lastWeight", "weights"),
    ("lastItem", "xs"),
    ("end", "values"),
    ("latest", "samples"),
];

/// (class, method, target test) for the decoder corpus and profiling set.
const TARGETS: &[(&str, &str, &str)] = &[
    (
        "com.example.calc.Calc",
        "last",
        "@Test\npublic void testLastOfThree() {\n    Calc calc = new Calc(ArrayUtils.of(4, 5, 6));\n    List<Integer> values = calc.toList();\n    assertEquals(6, calc.last());\n}",
    ),
    (
        "com.example.calc.Calc",
        "first",
        "@Test\npublic void testFirstOfTwo() {\n    Calc calc = new Calc(ArrayUtils.of(8, 9));\n    assertEquals(8, calc.first());\n}",
    ),
    (
        "com.example.calc.Calc",
        "sum",
        "@Test\npublic void testSumOfFour() {\n    Calc calc = new Calc(ArrayUtils.of(1, 2, 3, 4));\n    assertEquals(10, calc.sum());\n}",
    ),
    (
        "com.example.util.ArrayUtils",
        "max",
        "@Test\npublic void testMaxOfTwo() {\n    assertEquals(9, ArrayUtils.max(ArrayUtils.of(9, 2)));\n}",
    ),
    (
        "com.example.geo.Range",
        "width",
        "@Test\npublic void testWidthOfRange() {\n    Range range = new Range(2, 9);\n    assertEquals(7, range.width());\n}",
    ),
];

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let cfg = PipelineConfig::load(&root.join("pipeline.toml")).expect("fixture config");
    let data = root.join("data");

    let mut records: Vec<MethodRecord> = detector_corpus(&SynthConfig {
        samples: 120,
        seed: 3,
        defect_ratio: 0.5,
    })
    .iter()
    .map(|s| s.to_record())
    .collect();
    records.extend(CLEAN.iter().enumerate().map(|(i, code)| MethodRecord {
        id: format!("clean-{i:02}"),
        code: code.to_string(),
        label: 0,
        defect_lines: Vec::new(),
    }));
    for (i, (name, arr)) in ACCESSORS.iter().enumerate() {
        for (label, index) in [(1u8, format!("{arr}.length")), (0, format!("{arr}.length - 1"))] {
            records.push(MethodRecord {
                id: format!("accessor-{i:02}-{label}"),
                code: format!("public int {name}() {{\n    return {arr}[{index}];\n}}\n"),
                label,
                defect_lines: if label == 1 { vec![2] } else { Vec::new() },
            });
        }
    }
    write_jsonl(&data.join("methods.jsonl"), &records).unwrap();

    let project = cfg.project.defective.as_deref().unwrap();
    let methods = project_methods(project, &cfg.project.source_roots).unwrap();
    let mut corpus = Vec::new();
    let mut profiling = Vec::new();
    for (class, name, target) in TARGETS {
        let m = methods
            .iter()
            .find(|m| m.qualified_class == *class && m.method.name == *name)
            .expect("fixture method exists");
        // Mark the statement a locator would pick: the last one that is
        // not a bare closing brace.
        let statement = m.method.statements.len() - 1;
        let prompt = method_prompt(&cfg, m, &[statement]).unwrap();
        corpus.push(DecoderExample {
            prompt: prompt.text.clone(),
            target: target.to_string(),
        });
        profiling.push(ProfilingItem {
            id: m.id.clone(),
            prompt: prompt.text,
            highlighted: prompt.highlighted,
            reference_test: target.to_string(),
        });
    }
    write_jsonl(&data.join("decoder-corpus.jsonl"), &corpus).unwrap();
    write_jsonl(&data.join("profiling.jsonl"), &profiling).unwrap();
    println!("wrote {} method records, {} decoder examples", records.len(), corpus.len());
}
