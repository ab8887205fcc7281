use bac::csvlog::{self, EpisodeRow, EpisodeWriter, HEADER};
use bac::plot::{curve_rows, moving_average};
use bac_core::outcome::OutcomeTag;
use bac_core::rl::Variant;
use proptest::prelude::*;

fn brute_force(values: &[i8], window: usize) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for end in window..=values.len() {
        let s: f64 = values[end - window..end].iter().map(|&v| v as f64).sum();
        out.push((end - 1, s / window as f64));
    }
    out
}

fn row(worker: usize, index: u64, reward: i8, tag: OutcomeTag, tp: Option<f64>) -> EpisodeRow {
    EpisodeRow {
        wall_clock_ms: index * 7,
        worker_id: worker,
        episode_index: index,
        variant: Variant::PiA3cTp,
        reward,
        episode_length: 10 + index as u32,
        outcome_tag: tag,
        tp_loss_mean: tp,
        pi_loss_mean: (worker == 0).then_some(0.25),
    }
}

#[test]
fn constant_and_alternating_rewards() {
    assert!(moving_average(&[1; 40], 8).iter().all(|&(_, v)| v == 1.0));
    let alt: Vec<i8> = (0..30).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
    assert!(moving_average(&alt, 2).iter().all(|&(_, v)| v == 0.0));
}

#[test]
fn malformed_row_names_its_line() {
    let text = format!("{}\n0,1,0,A3C,1,12,win,,\n0,1,1,A3C,x,12,win,,\n", HEADER.join(","));
    let err = csvlog::read_rows(text.as_bytes()).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
}

proptest! {
    #[test]
    fn moving_average_matches_windowed_mean(values in prop::collection::vec(prop::sample::select(vec![-1i8, 1]), 0..200), window in 1usize..30) {
        let got = moving_average(&values, window);
        let want = brute_force(&values, window);
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert_eq!(g.0, w.0);
            prop_assert!((g.1 - w.1).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trips(specs in prop::collection::vec((0usize..4, any::<bool>(), 0usize..5, prop::option::of(0.0f64..10.0)), 0..40)) {
        let rows: Vec<EpisodeRow> = specs
            .iter()
            .enumerate()
            .map(|(i, &(w, win, t, tp))| row(w, i as u64, if win { 1 } else { -1 }, OutcomeTag::ALL[t], tp))
            .collect();
        let mut w = EpisodeWriter::new(Vec::new()).unwrap();
        for r in &rows {
            w.write(r).unwrap();
        }
        let bytes = w.into_inner().unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        let first = text.lines().next().unwrap().to_string();
        prop_assert_eq!(first, HEADER.join(","));
        prop_assert!(text.lines().all(|l| l.split(',').count() == HEADER.len()));
        prop_assert_eq!(csvlog::read_rows(&bytes[..]).unwrap(), rows);
    }

    #[test]
    fn excluded_workers_never_reach_the_curve(workers in prop::collection::vec(0usize..4, 0..60), demo in 0usize..4) {
        let rows: Vec<EpisodeRow> = workers.iter().enumerate().map(|(i, &w)| row(w, i as u64, 1, OutcomeTag::Win, None)).collect();
        let curve = curve_rows(&rows, &[demo]);
        prop_assert!(curve.iter().all(|r| r.worker_id != demo));
        prop_assert_eq!(curve.len(), workers.iter().filter(|&&w| w != demo).count());
    }
}
