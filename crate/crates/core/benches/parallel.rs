use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use irrisim_core::encoder::CropProfile;
use irrisim_core::exec::Exec;
use irrisim_core::fabric::MismatchModel;
use irrisim_core::pipeline::{staircase, Controller, PipelineSpec};

fn batch(c: &mut Criterion) {
    let profile = CropProfile::apple();
    let ctl = Controller::new(PipelineSpec::for_profile(&profile).unwrap()).unwrap();
    let steps = staircase(&ctl.spec.encoder.bands, 2);
    let seeds: Vec<u64> = (0..8).collect();

    let mut g = c.benchmark_group("staircase_batch");
    g.sample_size(10);
    for (name, exec) in [
        ("sequential", Exec::Sequential),
        ("parallel", Exec::Parallel),
    ] {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                exec.try_map(&seeds, |&seed| {
                    ctl.run(&steps, MismatchModel { cv: 0.1, seed })
                })
                .unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
