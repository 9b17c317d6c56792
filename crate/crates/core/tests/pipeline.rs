use std::sync::OnceLock;

use wavesim::calendar::{Season, HOURS_PER_YEAR};
use wavesim::config::RunConfig;
use wavesim::ingest::{HourlySeries, Regime};
use wavesim::pipeline::{fit_all, load_model, save_model, simulate, FittedModel};
use wavesim::renewal::{extract_durations, fit_renewal, PairKind};
use wavesim::rng::substream;
use wavesim::seasonal::decompose;
use wavesim::stats::{mean, pearson, pit_normalize, std_dev};
use wavesim::synthetic::{observations, reference_model};
use wavesim::Error;

const TRAINING_YEARS: usize = 12;

struct Fixture {
    reference: FittedModel,
    training: HourlySeries,
    fitted: FittedModel,
}

/// One 12-year fit shared by every test in this binary.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let reference = reference_model().unwrap();
        let training = observations(&reference, TRAINING_YEARS, 7).unwrap().series;
        let fitted = fit_all(&training, &RunConfig::default()).unwrap();
        Fixture {
            reference,
            training,
            fitted,
        }
    })
}

#[test]
fn one_year_is_rejected_naming_the_minimum() {
    let f = fixture();
    let short = f.training.year_slice(0, 1);
    let err = fit_all(&short, &RunConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Size(_)), "{err}");
    assert!(err.to_string().contains("at least 3"), "{err}");
}

#[test]
fn save_load_is_bit_exact() {
    let f = fixture();
    let dir = std::env::temp_dir().join(format!("wavesim-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.json");
    save_model(&f.fitted, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, f.fitted);
    assert_eq!(back.to_json().unwrap(), f.fitted.to_json().unwrap());
    assert_eq!(back.checksum().unwrap(), f.fitted.checksum().unwrap());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn explosive_ar_is_rejected_on_load() {
    let mut m = fixture().fitted.clone();
    m.arma_hm0.ar = vec![1.5, 0.1, -0.1];
    // to_json does not validate, so the checksum is consistent with the bad model.
    let text = m.to_json().unwrap();
    let err = FittedModel::from_json(&text).unwrap_err();
    assert!(matches!(err, Error::Invariant(_)), "{err}");
}

#[test]
fn edited_payload_fails_checksum() {
    let text = fixture().fitted.to_json().unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["model"]["provenance"]["years"] = serde_json::json!(13);
    let err = FittedModel::from_json(&doc.to_string()).unwrap_err();
    assert!(matches!(err, Error::Checksum { .. }), "{err}");
}

#[test]
fn missing_section_is_named() {
    let text = fixture().fitted.to_json().unwrap();
    for section in ["renewal", "arma_tm02", "diagnostics"] {
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["model"].as_object_mut().unwrap().remove(section);
        let err = FittedModel::from_json(&doc.to_string()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
        assert!(err.to_string().contains(section), "{err}");
    }
}

#[test]
fn unknown_schema_version_is_rejected() {
    let text = fixture().fitted.to_json().unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["schema_version"] = serde_json::json!("wavesim-model/0");
    let err = FittedModel::from_json(&doc.to_string()).unwrap_err();
    assert!(matches!(err, Error::Schema(_)), "{err}");
}

#[test]
fn simulation_contract() {
    let m = &fixture().fitted;
    let a = simulate(m, 3, 42).unwrap();
    let b = simulate(m, 3, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.series.len(), 3 * HOURS_PER_YEAR);
    assert_eq!(a.model_sha256, m.checksum().unwrap());
    let hmax = m.provenance.training_hm0_max;
    for i in 0..a.series.len() {
        let h = a.series.hm0[i].unwrap();
        let t = a.series.tm02[i].unwrap();
        assert!(h <= hmax && h >= m.hm0_cdf.min());
        let s = wavesim::steepness::steepness(h, t).unwrap();
        assert!(
            s <= m.steepness.s_max(h).unwrap() + 1e-9,
            "hour {i}: {h} {t}"
        );
        assert!(a.series.regime[i].is_some());
    }
    assert!(simulate(m, 0, 1).is_err());
}

#[test]
fn seeds_give_independent_replicates() {
    let m = &fixture().fitted;
    let a = simulate(m, TRAINING_YEARS, 1).unwrap().series;
    let b = simulate(m, TRAINING_YEARS, 2).unwrap().series;
    assert!(a.len() >= 100_000);
    let flat = |v: &[Option<f64>]| v.iter().map(|x| x.unwrap()).collect::<Vec<_>>();
    // The shared seasonal cycle correlates raw series; compare the
    // deseasonalized parts by subtracting each calendar hour's mean.
    let deseason = |v: Vec<f64>| {
        let mut mean = vec![0.0; HOURS_PER_YEAR];
        for (i, x) in v.iter().enumerate() {
            mean[i % HOURS_PER_YEAR] += x / TRAINING_YEARS as f64;
        }
        v.iter()
            .enumerate()
            .map(|(i, x)| x - mean[i % HOURS_PER_YEAR])
            .collect::<Vec<_>>()
    };
    let r_raw = pearson(&flat(&a.hm0), &flat(&b.hm0));
    let r = pearson(&deseason(flat(&a.hm0)), &deseason(flat(&b.hm0)));
    assert!(
        r.abs() < 0.02,
        "deseasonalized hm0 correlation {r} (raw {r_raw})"
    );
}

#[test]
fn training_data_decomposes_to_unit_residuals() {
    let f = fixture();
    let y = pit_normalize(&f.training.hm0, &f.fitted.hm0_cdf);
    let z: Vec<f64> = decompose(&y, 720)
        .unwrap()
        .z
        .into_iter()
        .flatten()
        .collect();
    let (m, sd) = (mean(&z), std_dev(&z));
    assert!(
        m.abs() < 0.05 && (sd - 1.0).abs() < 0.1,
        "z mean {m}, sd {sd}"
    );
    for r in &f.fitted.diagnostics.seasonal_r2 {
        if r.process.starts_with("mu") {
            assert!(r.r2 > 0.8, "{} r2 {}", r.process, r.r2);
        }
    }
}

#[test]
fn refit_recovers_arma_and_residual_dependence() {
    let f = fixture();
    for (got, want) in [
        (&f.fitted.arma_hm0, &f.reference.arma_hm0),
        (&f.fitted.arma_tm02, &f.reference.arma_tm02),
    ] {
        for (g, w) in got
            .ar
            .iter()
            .zip(&want.ar)
            .chain(got.ma.iter().zip(&want.ma))
        {
            assert!((g - w).abs() <= 0.05, "{:?} vs {:?}", got.ar, want.ar);
        }
    }
    for r in [Regime::North, Regime::Southwest] {
        let got = f.fitted.residuals.regime(r).copula.tau();
        let want = f.reference.residuals.regime(r).copula.tau();
        assert!((got - want).abs() <= 0.05, "regime {r:?}: {got} vs {want}");
    }
    assert_eq!(f.fitted.diagnostics.renewal_tau.len(), 8);
    assert_eq!(f.fitted.diagnostics.seasonal_r2.len(), 4);
    assert_eq!(f.fitted.diagnostics.arma.len(), 2);
}

/// At 12 years the duration-pair tau has a standard error near 0.04, so the
/// renewal half of the refit check uses a long regime record run through the
/// same fitting routine.
#[test]
fn refit_recovers_renewal_dependence() {
    let reference = &fixture().reference;
    let n = 150 * HOURS_PER_YEAR;
    let path = reference
        .renewal
        .simulate(n, Regime::North, &mut substream(11, "renewal"));
    let regimes: Vec<Option<Regime>> = path.into_iter().map(Some).collect();
    let cal = &reference.renewal.calendar;
    let records = extract_durations(&regimes, cal);
    let fitted = fit_renewal(&records, cal, &RunConfig::default().copula_candidates).unwrap();
    for s in Season::ALL {
        for kind in [PairKind::NorthToSouthwest, PairKind::SouthwestToNorth] {
            let got = fitted.season(s).copula(kind).tau();
            let want = reference.renewal.season(s).copula(kind).tau();
            assert!((got - want).abs() <= 0.05, "{s} {kind:?}: {got} vs {want}");
        }
    }
}
