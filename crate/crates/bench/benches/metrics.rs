use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use guiprobe_core::metrics::{delta_p, match_action, vmc, Aggregate, VMC_GAMMA_PX};
use guiprobe_core::model::{Action, ActionKind, Point};

fn synthetic_outcomes(n: usize, shift: i64) -> Vec<guiprobe_core::metrics::StepOutcome> {
    (0..n)
        .map(|i| {
            let gt = Action::Click(Point::new((i as i64 * 13) % 1000, (i as i64 * 29) % 1000));
            let mut o = match_action(&format!("s{i:05}"), None, &gt);
            // Hand-shape the outcome so aggregation sees a realistic mix.
            o.answered = true;
            o.type_ok = i % 7 != 0;
            o.grounding_ok = Some(i % 5 != 0);
            o.sr_ok = o.type_ok && i.wrapping_add(shift as usize) % 5 != 0;
            o.pred_kind = Some(ActionKind::Click);
            o.pred_point = Some(Point::new((i as i64 * 13 + shift) % 1000, (i as i64 * 29) % 1000));
            o
        })
        .collect()
}

fn bench_metrics(c: &mut Criterion) {
    let base = synthetic_outcomes(1000, 0);
    let perturbed = synthetic_outcomes(1000, 3);
    let pairs: Vec<(Point, Point)> = (0..10_000)
        .map(|i| {
            let a = Point::new(i % 1920, (i * 3) % 1080);
            let b = Point::new((i + i % 90) % 1920, (i * 3 + 40) % 1080);
            (a, b)
        })
        .collect();

    let mut group = c.benchmark_group("metrics");
    group.bench_function("aggregate_1000", |b| {
        b.iter(|| black_box(Aggregate::from_outcomes(black_box(&base)).unwrap()))
    });
    group.bench_function("delta_p_1000", |b| {
        b.iter(|| black_box(delta_p(black_box(&base), black_box(&perturbed)).unwrap()))
    });
    group.bench_function("vmc_10000", |b| {
        b.iter(|| black_box(vmc(black_box(&pairs), VMC_GAMMA_PX)))
    });
    group.finish();
}

criterion_group!(benches, bench_metrics);
criterion_main!(benches);
