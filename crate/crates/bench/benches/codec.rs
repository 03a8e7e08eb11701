use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use guiprobe_bench::bench_screen;
use guiprobe_core::codec::{parse_action, serialize_action, Registry};
use guiprobe_core::model::{Action, Point};

fn bench_codec(c: &mut Criterion) {
    let registry = Registry::builtin();
    let screen = bench_screen(360, 640);
    let samples = [
        ("json", "Looking at the screen, I should tap it.\n{\"action\": \"click\", \"x\": 512, \"y\": 488}"),
        ("func", "The button sits near the top.\nclick(120, 310)"),
        ("tag", "The list continues below.\nSCROLL down"),
    ];

    let mut group = c.benchmark_group("codec");
    for (dialect, raw) in samples {
        let grammar = registry.get(dialect).unwrap();
        group.bench_function(format!("parse_{dialect}"), |b| {
            b.iter(|| black_box(parse_action(black_box(raw), &grammar, &screen)))
        });
    }
    let grammar = registry.get("json").unwrap();
    let action = Action::Click(Point::new(512, 488));
    group.bench_function("serialize_json", |b| {
        b.iter(|| black_box(serialize_action(black_box(&action), &grammar, &screen)))
    });
    group.finish();
}

criterion_group!(benches, bench_codec);
criterion_main!(benches);
