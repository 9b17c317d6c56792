use proptest::prelude::*;
use wavesim::validate::{extract_storms, StormThresholds};

fn series() -> impl Strategy<Value = (Vec<Option<f64>>, Vec<Option<f64>>)> {
    prop::collection::vec(
        (
            prop::option::weighted(0.9, 0.1f64..5.0),
            prop::option::weighted(0.9, 2.0f64..9.0),
        ),
        0..300,
    )
    .prop_map(|v| v.into_iter().unzip())
}

proptest! {
    #[test]
    fn runs_tile_the_series((h, t) in series(), hs in 0.5f64..4.0, ts in 2.5f64..8.0) {
        let th = StormThresholds::new(hs, ts, None).unwrap();
        let e = extract_storms(&h, &t, &th);
        prop_assert_eq!(e.covered_hours(), h.len());
        prop_assert!(e.storms.iter().all(|s| s.duration >= 1));
        prop_assert!(e.interarrivals.iter().all(|&d| d >= 1));
        // Interarrivals sit strictly between consecutive storms.
        prop_assert!(e.interarrivals.len() < e.storms.len().max(1));
        for s in &e.storms {
            prop_assert!(s.peak_hm0 >= hs && s.peak_tm02 >= ts);
        }
    }

    #[test]
    fn storm_hours_shrink_as_thresholds_rise((h, t) in series(), hs in 0.5f64..3.0, ts in 2.5f64..6.0, dh in 0.0f64..1.0, dt in 0.0f64..1.0) {
        let lo = StormThresholds::new(hs, ts, None).unwrap();
        let hi = StormThresholds::new(hs + dh, ts + dt, None).unwrap();
        let hours = |th: &StormThresholds| extract_storms(&h, &t, th).durations().iter().sum::<usize>();
        prop_assert!(hours(&hi) <= hours(&lo));
    }
}

/// Storm counts themselves are not monotone: a higher threshold can split
/// one storm in two.
#[test]
fn raising_a_threshold_can_split_a_storm() {
    let h: Vec<Option<f64>> = [3.0, 1.5, 3.0].iter().map(|&x| Some(x)).collect();
    let t = vec![Some(6.0); 3];
    let low = extract_storms(&h, &t, &StormThresholds::new(1.0, 5.0, None).unwrap());
    let high = extract_storms(&h, &t, &StormThresholds::new(2.0, 5.0, None).unwrap());
    assert_eq!((low.storms.len(), high.storms.len()), (1, 2));
}

mod report {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use wavesim::calendar::{Season, SeasonCalendar, HOURS_PER_YEAR};
    use wavesim::ingest::{HourlySeries, Regime};
    use wavesim::pipeline::simulate;
    use wavesim::synthetic::reference_model;
    use wavesim::validate::*;

    fn bernoulli_storms(years: usize, q: f64, rng: &mut ChaCha8Rng) -> HourlySeries {
        let n = years * HOURS_PER_YEAR;
        HourlySeries {
            origin_year: 0,
            source_id: "bernoulli".into(),
            hm0: (0..n)
                .map(|_| Some(if rng.random::<f64>() < q { 3.0 } else { 1.0 }))
                .collect(),
            tm02: vec![Some(6.0); n],
            regime: vec![Some(Regime::North); n],
        }
    }

    /// Independent storm hours: the expected run count of an i.i.d.
    /// Bernoulli(q) sequence of length n is q + (n - 1) q (1 - q).
    #[test]
    fn band_covers_the_generating_mean() {
        let q = 0.01;
        let n = HOURS_PER_YEAR as f64;
        let mean = q + (n - 1.0) * q * (1.0 - q);
        let th = StormThresholds::new(2.0, 5.0, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reps = 50;
        let covered = (0..reps)
            .filter(|_| {
                storm_count_band(&bernoulli_storms(40, q, &mut rng), 1, &th)
                    .unwrap()
                    .q05
                    <= mean
            })
            .count();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let covered_hi = (0..reps)
            .filter(|_| {
                storm_count_band(&bernoulli_storms(40, q, &mut rng), 1, &th)
                    .unwrap()
                    .q95
                    >= mean
            })
            .count();
        assert!(
            covered.min(covered_hi) * 10 >= reps * 9,
            "{covered} {covered_hi}"
        );
    }

    #[test]
    fn identical_inputs_agree_exactly() {
        let m = reference_model().unwrap();
        let s = simulate(&m, 3, 4).unwrap().series;
        let r = validation_report(&s, &s, &DEFAULT_QUANTILES, &SeasonCalendar::default()).unwrap();
        assert_eq!(r.schema_version, REPORT_SCHEMA_VERSION);
        assert_eq!(r.storms.len(), 6);
        for p in &r.percentages {
            assert_eq!(p.ks.unwrap().p_value, 1.0);
            assert_eq!(p.observed, p.simulated);
        }
        for b in &r.storms {
            assert_eq!(b.durations_ks.unwrap().p_value, 1.0);
            assert!(b.band.is_none() && b.observed_in_band.is_none());
        }
        for c in &r.densities.all.curves {
            assert_eq!(c.observed, c.simulated);
            assert_eq!(c.coverage, Some(1.0));
        }
        let json = serde_json::to_value(&r).unwrap();
        for key in ["schema_version", "percentages", "storms", "densities"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        // The 0.965 block sits between its neighbours.
        let h: Vec<f64> = r.storms.iter().map(|b| b.thresholds.h_star).collect();
        assert!(h.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn observed_years_lie_in_the_simulated_cloud() {
        let m = reference_model().unwrap();
        let obs = simulate(&m, 4, 21).unwrap().series;
        let sim = simulate(&m, 60, 22).unwrap().series;
        let d = density_report(&obs, &sim, None).unwrap();
        for c in &d.curves {
            let cov = c.coverage.unwrap();
            assert!(cov >= 0.9, "{:?}: {cov}", c.variable);
        }
        let hi = &d.contours[0];
        let lo = &d.contours[1];
        assert_eq!(hi.observed.len(), 4);
        assert_eq!(hi.simulated.len(), MAX_CONTOUR_YEARS);
        // The wider level set encloses the narrower one, year by year.
        for (h, l) in hi.observed.iter().zip(&lo.observed) {
            for p in h.iter().flatten() {
                assert!(l.iter().any(|poly| inside(poly, *p)));
            }
        }
        let north = density_report(&obs, &sim, Some(Regime::North)).unwrap();
        assert_eq!(north.regime, Some(Regime::North));
    }

    #[test]
    fn reference_regimes_favour_southwest_in_spring() {
        let m = reference_model().unwrap();
        let path = m.renewal.simulate(
            200 * HOURS_PER_YEAR,
            Regime::North,
            &mut ChaCha8Rng::seed_from_u64(8),
        );
        let reg: Vec<Option<Regime>> = path.into_iter().map(Some).collect();
        let p = season_percentages(&reg, &SeasonCalendar::default()).unwrap();
        let mean =
            |s: Season| p.iter().map(|r| r[s.index()].unwrap()).sum::<f64>() / p.len() as f64;
        let spring = mean(Season::Spring);
        let autumn = mean(Season::Autumn);
        for s in Season::ALL {
            assert!(spring >= mean(s) && autumn <= mean(s), "{s}: {}", mean(s));
            for r in &p {
                let v = r[s.index()].unwrap();
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
