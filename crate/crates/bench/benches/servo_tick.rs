use criterion::{black_box, criterion_group, criterion_main, Criterion};
use haptilab::protocol::SnapshotMessage;
use haptilab::ScenarioId;
use haptilab_bench::scripted_servo;

fn servo_tick(c: &mut Criterion) {
    let mut group = c.benchmark_group("servo_tick");
    for scenario in ScenarioId::ALL {
        let mut servo = scripted_servo(scenario);
        group.bench_function(scenario.as_str(), |b| {
            b.iter(|| black_box(servo.tick().expect("tick")))
        });
    }
    group.finish();
}

fn snapshot_encode(c: &mut Criterion) {
    let mut group = c.benchmark_group("snapshot_encode");
    for scenario in ScenarioId::ALL {
        let mut servo = scripted_servo(scenario);
        let result = servo.tick().expect("tick");
        group.bench_function(scenario.as_str(), |b| {
            b.iter(|| {
                let msg = SnapshotMessage::from(black_box(&result.snapshot));
                black_box(serde_json::to_string(&msg).expect("encode"))
            })
        });
    }
    group.finish();
}

fn state_hash(c: &mut Criterion) {
    let mut servo = scripted_servo(ScenarioId::Precession);
    servo.tick().expect("tick");
    c.bench_function("state_hash/precession", |b| b.iter(|| black_box(servo.core().state_hash())));
}

criterion_group!(benches, servo_tick, snapshot_encode, state_hash);
criterion_main!(benches);
