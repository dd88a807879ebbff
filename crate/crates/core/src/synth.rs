//! Synthetic planted-pattern corpora.
//!
//! Every generated method is built from the same pool of benign statements
//! plus one loop or indexing statement. In defective methods that statement
//! carries an off-by-one pattern (`<=` against `.length`, or indexing at
//! `.length`); in clean methods it carries the correct twin. Detection and
//! localization therefore both hinge on a single planted statement.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::code_model::{parse_method_snippet, Method};
use crate::dataset::MethodRecord;
use crate::nn::stream_rng;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub samples: usize,
    pub seed: u64,
    /// Fraction of defective samples (detector corpus only).
    pub defect_ratio: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            samples: 200,
            seed: 0,
            defect_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthSample {
    pub id: String,
    pub code: String,
    pub method: Method,
    pub label: bool,
    /// 1-based lines (relative to `code`) of the planted statement.
    pub defect_lines: Vec<usize>,
    /// Index of the planted statement in `method.statements`.
    pub planted_statement: usize,
}

impl SynthSample {
    pub fn to_record(&self) -> MethodRecord {
        MethodRecord {
            id: self.id.clone(),
            code: self.code.clone(),
            label: u8::from(self.label),
            defect_lines: if self.label { self.defect_lines.clone() } else { Vec::new() },
        }
    }
}

const NAMES: &[&str] = &[
    "sum", "scan", "total", "accumulate", "measure", "collect", "reduce", "tally", "merge",
    "compute", "process", "score", "weigh", "rank", "fold",
];
const VARS: &[&str] = &[
    "count", "acc", "value", "result", "limit", "offset", "index", "size", "step", "width",
];
const ARRAYS: &[&str] = &["xs", "data", "items", "values", "buffer", "weights"];

struct Ctx<'a> {
    rng: &'a mut ChaCha8Rng,
    arr: &'static str,
}

impl Ctx<'_> {
    fn var(&mut self) -> &'static str {
        VARS.choose(self.rng).unwrap()
    }

    fn num(&mut self) -> i32 {
        self.rng.gen_range(0..50)
    }

    /// A benign statement, possibly spanning several lines.
    fn benign(&mut self) -> Vec<String> {
        let (a, b, n) = (self.var(), self.var(), self.num());
        match self.rng.gen_range(0..8) {
            0 => vec![format!("int {a} = {n};")],
            1 => vec![format!("{a} += {b};")],
            2 => vec![format!("if ({a} > {n}) {{"), format!("    {a} = {n};"), "}".into()],
            3 => vec![format!("System.out.println(\"{a}\" + {b});")],
            4 => vec![format!("String label = \"{a}-{n}\";")],
            5 => vec![format!("{a} = Math.max({a}, {b});")],
            6 => vec![format!("long {a}Copy = (long) {b} * {n};")],
            _ => vec![format!("check({a}, {n});")],
        }
    }

    /// The planted statement and its clean twin; returns the lines and the
    /// offset of the statement line within them.
    fn planted(&mut self, defective: bool) -> Vec<String> {
        let arr = self.arr;
        let v = self.var();
        match self.rng.gen_range(0..2) {
            0 => {
                let cmp = if defective { "<=" } else { "<" };
                vec![
                    format!("for (int i = 0; i {cmp} {arr}.length; i++) {{"),
                    format!("    {v} += {arr}[i];"),
                    "}".into(),
                ]
            }
            _ => {
                let idx = if defective {
                    format!("{arr}.length")
                } else {
                    format!("{arr}.length - 1")
                };
                vec![format!("int last = {arr}[{idx}];")]
            }
        }
    }
}

fn generate(rng: &mut ChaCha8Rng, id: String, defective: bool) -> SynthSample {
    let arr = *ARRAYS.choose(rng).unwrap();
    let name = *NAMES.choose(rng).unwrap();
    let mut ctx = Ctx { rng, arr };
    let n_benign = ctx.rng.gen_range(2..6);
    let mut units: Vec<Vec<String>> = (0..n_benign).map(|_| ctx.benign()).collect();
    let at = ctx.rng.gen_range(0..=units.len());
    units.insert(at, ctx.planted(defective));

    let mut lines = vec![format!("public int {name}(int[] {arr}, int count) {{")];
    let mut defect_line = 0;
    for (i, unit) in units.iter().enumerate() {
        if i == at {
            defect_line = lines.len() + 1;
        }
        lines.extend(unit.iter().map(|l| format!("    {l}")));
    }
    lines.push("    return count;".into());
    lines.push("}".into());
    let code = lines.join("\n") + "\n";
    let method = parse_method_snippet(&code, "").expect("generated code parses");
    let planted_statement = method.statements_on_lines(&[defect_line])[0];
    SynthSample {
        id,
        code,
        method,
        label: defective,
        defect_lines: vec![defect_line],
        planted_statement,
    }
}

/// Balanced-ish corpus of defective and clean methods.
pub fn detector_corpus(cfg: &SynthConfig) -> Vec<SynthSample> {
    let mut rng = stream_rng(cfg.seed, &[0x5EED, 1]);
    (0..cfg.samples)
        .map(|i| {
            let defective = rng.gen::<f64>() < cfg.defect_ratio;
            generate(&mut rng, format!("synth-{i:04}"), defective)
        })
        .collect()
}

/// Defective methods only, each with its planted statement labeled.
pub fn locator_corpus(cfg: &SynthConfig) -> Vec<SynthSample> {
    let mut rng = stream_rng(cfg.seed, &[0x5EED, 2]);
    (0..cfg.samples)
        .map(|i| generate(&mut rng, format!("loc-{i:04}"), true))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpora_are_deterministic_and_labeled() {
        let cfg = SynthConfig { samples: 50, seed: 9, ..SynthConfig::default() };
        let a = detector_corpus(&cfg);
        let b = detector_corpus(&cfg);
        assert_eq!(a.len(), 50);
        assert!(a.iter().zip(&b).all(|(x, y)| x.code == y.code && x.label == y.label));
        let pos = a.iter().filter(|s| s.label).count();
        assert!(pos > 10 && pos < 40, "unbalanced: {pos}");
        for s in &a {
            let planted = &s.method.statements[s.planted_statement];
            assert!(planted.line_range.contains(s.defect_lines[0]));
            let bad = planted.text.contains("<=") || planted.text.contains(".length]");
            assert_eq!(bad, s.label, "{}", s.code);
        }
    }

    #[test]
    fn locator_corpus_is_all_defective() {
        let samples = locator_corpus(&SynthConfig { samples: 20, ..SynthConfig::default() });
        assert!(samples.iter().all(|s| s.label && s.to_record().defect_lines.len() == 1));
    }
}
