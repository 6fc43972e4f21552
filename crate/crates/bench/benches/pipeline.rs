use criterion::{black_box, criterion_group, criterion_main, Criterion};

use qsslab_core::diagnostics;
use qsslab_core::estimation::{fit_reduced, Dataset, FitParam, FreeParam, Observable};
use qsslab_core::model::{scaled_wc_rhs, InitialConditions, RateConstants, System};
use qsslab_core::ode::{detect_min_distance, integrate, IntegrationSettings};
use qsslab_core::reductions::ReducedKind;

fn slow_catalysis_system() -> System {
    System::new(
        RateConstants::new(1.0, 5.0, 0.01).unwrap(),
        InitialConditions::new(9.0, 1.0).unwrap(),
    )
}

fn bench_integrate(c: &mut Criterion) {
    let sys = slow_catalysis_system();
    let settings = IntegrationSettings::with_t_end(100.0);
    c.bench_function("integrate_mass_action_t100", |b| {
        b.iter(|| {
            let traj = integrate(
                sys.ode_mass_action(),
                black_box(&[9.0, 0.0, 1.0, 0.0]),
                &settings,
            )
            .unwrap();
            black_box(traj.last_state()[3])
        })
    });
}

fn bench_diagnose(c: &mut Criterion) {
    let sys = slow_catalysis_system();
    c.bench_function("diagnose_report", |b| {
        b.iter(|| {
            black_box(diagnostics::recommend(
                &sys.params,
                &sys.ics,
                black_box(0.01),
            ))
        })
    });
}

fn bench_scaled_passage(c: &mut Criterion) {
    let settings = IntegrationSettings::with_t_end(1.0);
    let mut group = c.benchmark_group("scaled_passage");
    group.sample_size(10);
    group.bench_function("eps_hat_1e-2", |b| {
        b.iter(|| {
            let traj = integrate(
                scaled_wc_rhs(1e-2, 1.0, 1.0),
                black_box(&[0.0, 0.0]),
                &settings,
            )
            .unwrap();
            black_box(detect_min_distance(&traj, &[1.0, 0.0]).1)
        })
    });
    group.finish();
}

fn bench_fit(c: &mut Criterion) {
    let ics = InitialConditions::new(5.0, 10.0).unwrap();
    let samples: Vec<(f64, f64)> = (1..=40)
        .map(|i| {
            let t = 30.0 * i as f64 / 40.0;
            (t, 5.0 * (1.0 - (-0.1 * t).exp()))
        })
        .collect();
    let data = Dataset::from_samples(Observable::W, samples, ics).unwrap();
    c.bench_function("fit_reverse_closed_form", |b| {
        b.iter(|| {
            black_box(
                fit_reduced(
                    ReducedKind::ReverseW,
                    black_box(&data),
                    &[FreeParam::new(FitParam::K2, 0.03)],
                )
                .unwrap(),
            )
        })
    });
}

criterion_group!(
    benches,
    bench_integrate,
    bench_diagnose,
    bench_scaled_passage,
    bench_fit
);
criterion_main!(benches);
