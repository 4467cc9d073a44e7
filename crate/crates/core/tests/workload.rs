use priostream::model::{Millis, OperatorId};
use priostream::workload::{generate_arrivals, pareto_samples, ArrivalProcess, ArrivalStream, SourceProfile};
use proptest::prelude::*;

/// Hill estimator of the tail index from the `k` largest values.
fn hill(values: &[f64], k: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let threshold = v[k].ln();
    k as f64 / v[..k].iter().map(|x| x.ln() - threshold).sum::<f64>()
}

#[test]
fn pareto_tail_index_is_recovered() {
    for (shape, seed) in [(1.5, 1), (2.0, 2), (3.0, 3)] {
        let xs = pareto_samples(shape, 1.0, 100_000, seed).unwrap();
        let est = hill(&xs, 2_000);
        assert!((est / shape - 1.0).abs() < 0.15, "shape {shape}: {est}");
    }
}

#[test]
fn bursty_batches_keep_the_tail() {
    let profile = SourceProfile {
        rate: 100.0,
        tuples_per_message: 10_000,
        process: ArrivalProcess::Pareto { shape: 2.0, scale: 1.0 },
        end_ms: 600_000,
        ..Default::default()
    };
    let tuples: Vec<f64> = ArrivalStream::new(profile, OperatorId(0), 4)
        .unwrap()
        .map(|e| e.tuples as f64)
        .collect();
    let est = hill(&tuples, 2_000);
    assert!((est / 2.0 - 1.0).abs() < 0.15, "{est}");
    let mean = tuples.iter().sum::<f64>() / tuples.len() as f64;
    assert!((mean / 10_000.0 - 1.0).abs() < 0.05, "{mean}");
}

#[test]
fn poisson_gaps_have_the_configured_mean() {
    let profile = SourceProfile {
        rate: 50.0,
        process: ArrivalProcess::Poisson,
        ..Default::default()
    };
    let events: Vec<_> = generate_arrivals(&profile, 200_000, 8).unwrap().collect();
    let rate = events.len() as f64 / 200.0;
    assert!((rate / 50.0 - 1.0).abs() < 0.05, "{rate}");
    assert!(events.windows(2).all(|w| w[0].t <= w[1].t));
}

proptest! {
    /// Re-batching keeps the tuple rate: totals differ by less than one
    /// batch of the coarser setting.
    #[test]
    fn batching_conserves_tuples(batch in 1u64..5_000, rate in 1.0f64..20.0) {
        let base = SourceProfile { rate, tuples_per_message: 100, end_ms: 60_000, ..Default::default() };
        let horizon: Millis = 60_000;
        let total = |p: &SourceProfile| -> u64 { generate_arrivals(p, horizon, 1).unwrap().map(|e| e.tuples).sum() };
        let a = total(&base);
        let b = total(&base.with_batch(batch));
        let slack = batch.max(100) as i64;
        prop_assert!((a as i64 - b as i64).abs() <= slack, "{} vs {} (batch {})", a, b, batch);
    }
}
