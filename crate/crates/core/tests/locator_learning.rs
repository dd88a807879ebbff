use std::time::Instant;

use steertest::detector::TrainingConfig;
use steertest::locator::{locate_defects, train_locator, LocatorSample};
use steertest::synth::{locator_corpus, SynthConfig};

fn samples(n: usize, seed: u64) -> Vec<LocatorSample> {
    locator_corpus(&SynthConfig { samples: n, seed, ..SynthConfig::default() })
        .into_iter()
        .map(|s| LocatorSample { id: s.id, method: s.method, defect_lines: s.defect_lines })
        .collect()
}

#[test]
fn locator_ranks_planted_statement_first() {
    let data = samples(200, 2);
    let start = Instant::now();
    let (model, report) = train_locator(&data, &TrainingConfig::default()).unwrap();
    eprintln!(
        "epochs={} best={} top1={} elapsed={:?}",
        report.epochs.len(),
        report.best_epoch,
        report.best_val_top1,
        start.elapsed()
    );
    assert!(report.best_val_top1 >= 0.9, "{report:?}");
    let held_out = samples(40, 99);
    let hits = held_out
        .iter()
        .filter(|s| {
            let top = locate_defects(&model, &s.method, 1).unwrap().statement_indices[0];
            s.method.statements[top].line_range.contains(s.defect_lines[0])
        })
        .count();
    assert!(hits >= 36, "held-out {hits}/40");
}
