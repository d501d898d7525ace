//! Simulation harness and model selection, end to end.

use mgnd::rng::substream;
use mgnd::select::{aic, bic, compare_models, default_candidates, describe, Candidate};
use mgnd::sim::{builtin_scenario, relabel, run_scenario, sample_mixture, sample_mixture_labeled, ScenarioSpec};
use mgnd::{Algorithm, FitConfig, MgndModel};

fn small_spec() -> ScenarioSpec {
    builtin_scenario(3).unwrap().with_replicates(4).with_sizes(vec![120, 200]).with_starts(2)
}

#[test]
fn report_is_independent_of_thread_count() {
    let spec = small_spec();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| run_scenario(&spec).unwrap())
    };
    let one = run(1);
    let three = run(3);
    assert_eq!(one.to_tsv(), three.to_tsv());
    assert_eq!(one.to_json(), three.to_json());
}

#[test]
fn report_layout() {
    let spec = small_spec();
    let report = run_scenario(&spec).unwrap();
    assert_eq!(report.cells.len(), 4);
    assert_eq!(report.records.len(), 2 * 2 * 4);
    for cell in &report.cells {
        assert_eq!(cell.n_used + cell.n_failed, 4);
        assert_eq!(cell.stats.len(), 8);
    }
    let tsv = report.to_tsv();
    assert_eq!(tsv.lines().count(), 1 + 4 * 8);
    assert!(tsv.starts_with("scenario\talgorithm\tn\tparameter\ttruth\tavg\trmse\tn_used\tn_failed\n"));
    let back: mgnd::sim::SimReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn both_algorithms_see_the_same_data_and_starts() {
    let spec = builtin_scenario(1).unwrap().with_replicates(2).with_sizes(vec![150]).with_starts(2);
    let report = run_scenario(&spec).unwrap();
    // Identical starts under α ≡ 1 and no gate reproduce ECM exactly.
    let mut same = spec.clone();
    same.fit_config_ecms = FitConfig { unit_step: true, eta: f64::NEG_INFINITY, ..spec.fit_config_ecms.clone() };
    let twin = run_scenario(&same).unwrap();
    let ecm: Vec<_> = report.records.iter().filter(|r| r.algorithm == Algorithm::Ecm).collect();
    let ecms_as_ecm: Vec<_> = twin.records.iter().filter(|r| r.algorithm == Algorithm::Ecms).collect();
    for (a, b) in ecm.iter().zip(&ecms_as_ecm) {
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.loglik, b.loglik);
    }
}

#[test]
fn composition_frequencies_match_weights() {
    let truth = MgndModel::from_parts(&[0.2, 0.5, 0.3], &[-3.0, 0.0, 3.0], &[1.0, 1.0, 1.0], &[2.0, 1.0, 4.0]).unwrap();
    let n = 200_000;
    let draws = sample_mixture_labeled(&truth, n, &mut substream(41, &[]));
    for (k, c) in truth.components().iter().enumerate() {
        let freq = draws.iter().filter(|(j, _)| *j == k).count() as f64 / n as f64;
        let se = (c.pi * (1.0 - c.pi) / n as f64).sqrt();
        assert!((freq - c.pi).abs() <= 4.0 * se, "k={k}: {freq}");
    }
}

#[test]
fn relabel_undoes_a_permutation() {
    let truth = builtin_scenario(1).unwrap().truth;
    let c = truth.components();
    let swapped = MgndModel::new(vec![c[1], c[0]]).unwrap();
    assert_eq!(relabel(&swapped, &truth).unwrap(), truth);
}

#[test]
fn bic_prefers_the_true_family_on_heavy_tailed_data() {
    let truth = MgndModel::from_parts(&[0.7, 0.3], &[1.0, 5.0], &[3.0, 1.0], &[5.0, 1.5]).unwrap();
    let data = sample_mixture(&truth, 3000, &mut substream(51, &[]));
    let ranking = compare_models(&data, &default_candidates(2, 3, 1)).unwrap();
    assert_eq!(ranking.bic_winner().unwrap().label, "MGND");
    for row in &ranking.rows {
        assert!((row.bic - row.aic - row.p as f64 * ((3000f64).ln() - 2.0)).abs() < 1e-9);
        assert_eq!(row.aic, aic(row.loglik, row.p));
        assert_eq!(row.bic, bic(row.loglik, row.p, 3000));
    }
}

#[test]
fn ranking_edge_cases() {
    let data = sample_mixture(&builtin_scenario(4).unwrap().truth, 300, &mut substream(52, &[]));
    let one = compare_models(&data, &[Candidate::new("only", 2, FitConfig::ecms().with_starts(1))]).unwrap();
    assert!(one.rows[0].aic_winner && one.rows[0].bic_winner);

    let cfg = FitConfig::ecms().with_starts(1).with_seed(2);
    let twice = compare_models(&data, &[Candidate::new("a", 2, cfg.clone()), Candidate::new("b", 2, cfg)]).unwrap();
    assert_eq!(twice.rows[0].bic, twice.rows[1].bic);
    assert_eq!(twice.rows[0].label, "a");
    assert!(twice.rows[0].bic_winner && !twice.rows[1].bic_winner);

    assert!(compare_models(&data, &[]).is_err());
}

#[test]
fn describe_on_gaussian_sample() {
    let g = mgnd::GndParams::new(0.0, 2f64.sqrt(), 2.0).unwrap();
    let xs = g.sample(&mut substream(53, &[]), 100_000);
    let s = describe(&xs).unwrap();
    assert!(s.skewness.abs() < 0.05);
    assert!((s.kurtosis - 3.0).abs() < 0.1);
    assert!((s.std - 1.0).abs() < 0.01);
    assert!(s.jb_p_value > 1e-4);
}
