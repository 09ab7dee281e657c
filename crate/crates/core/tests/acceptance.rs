//! Acceptance suite.
//!
//! Runs every acceptance criterion in sequence at its pinned budget and
//! tolerance, printing one `PASS`/`FAIL` line per criterion, and exits
//! non-zero if any criterion fails. Criteria run one at a time so that the
//! wall-clock limits are measured without interference.
//!
//! Pass criterion numbers to run a subset:
//! `cargo test --release --test acceptance -- 1 6`.

use std::f64::consts::LN_2;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;

use immse::builtins::{
    ct_constant_message, ct_linear_feedback, debruijn_gaussian, linear_feedback,
    linear_feedback_n2, scalar_gaussian,
};
use immse::ctsim::{ct_mi, girsanov_normalization, solve_em, solve_picard};
use immse::identities::{
    check, check_debruijn_remark, Budget, IdentityId, IdentityReport, Verdict,
};
use immse::model::{InputMap, Prior};
use immse::registry::{ct_drift, drift};
use immse::rng::substream;
use immse::{AnySpec, CTSystemSpec, DeBruijnSpec, LinearFeedbackSpec, MessagePrior, SystemSpec};

const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

struct Criterion {
    id: u32,
    title: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn snr_spec(snr: f64) -> AnySpec {
    AnySpec::Scalar(scalar_gaussian())
        .with_param("snr", snr)
        .expect("snr applies to scalar channels")
}

fn run(id: IdentityId, spec: &AnySpec, budget: &Budget) -> IdentityReport {
    check(id, spec, budget).unwrap_or_else(|e| panic!("{id} failed to run: {e}"))
}

fn c1_memoryless() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for snr in [0.25, 1.0, 4.0] {
        let spec = snr_spec(snr);
        let oracle = run(IdentityId::ImmseSnr, &spec, &Budget::default());
        let mc = run(
            IdentityId::ImmseSnr,
            &spec,
            &Budget::monte_carlo(10_000, 10_000, SEED),
        );
        ok &= oracle.gap.absolute <= 1e-8 && mc.verdict == Verdict::Pass;
        parts.push(format!(
            "snr {snr}: oracle gap {:.1e}, mc gap {:.2e} ({:.1}%) <= tol {:.2e} ({:?})",
            oracle.gap.absolute,
            mc.gap.absolute,
            100.0 * mc.gap.relative,
            mc.tolerance,
            mc.verdict
        ));
    }
    Outcome::new(ok, parts.join("; "))
}

/// Random causal linear scheme with `n` uses and an `n`-dimensional message.
fn random_linear(n: usize, rho: f64, draw: u64) -> LinearFeedbackSpec {
    let mut rng = substream(SEED, 0xacce_9700 + n as u64, draw);
    let mut normal = || rng.sample::<f64, _>(StandardNormal);
    let l: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| normal()).collect()).collect();
    let cov: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (0..n).map(|k| l[i][k] * l[j][k]).sum::<f64>() / n as f64
                        + if i == j { 0.5 } else { 0.0 }
                })
                .collect()
        })
        .collect();
    let a = (0..n).map(|_| (0..n).map(|_| normal()).collect()).collect();
    let b = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if j < i { 0.5 * normal() } else { 0.0 })
                .collect()
        })
        .collect();
    LinearFeedbackSpec {
        n,
        message_dim: n,
        message_cov: cov,
        input_map: InputMap { a, b },
        rho,
    }
}

fn c2_linear_oracle() -> Outcome {
    let (mut worst, mut worst_mmse_only, mut failed, mut total) = (0.0_f64, 0.0_f64, 0, 0);
    let mut worst_at = String::new();
    for n in 1..=8 {
        for rho in [0.25, 0.5, 1.0, 2.0] {
            for draw in 0..10 {
                let spec = AnySpec::Linear(random_linear(n, rho, draw));
                let r = run(IdentityId::DtExtended, &spec, &Budget::default());
                total += 1;
                if r.gap.absolute > 1e-6 {
                    failed += 1;
                }
                if r.gap.absolute > worst {
                    worst = r.gap.absolute;
                    worst_at = format!("n={n} rho={rho} draw={draw}");
                }
                worst_mmse_only = worst_mmse_only.max(r.diagnostics["mmse_only_gap"]);
            }
        }
    }
    Outcome::new(
        failed == 0,
        format!(
            "{failed}/{total} specs exceed gap 1e-6 (worst {worst:.3e} at {worst_at}); \
             largest gap against the MMSE term alone {worst_mmse_only:.1e}"
        ),
    )
}

fn c3_feedback_mc() -> Outcome {
    let r = run(
        IdentityId::DtFeedbackSnr,
        &AnySpec::Linear(linear_feedback_n2()),
        &Budget::monte_carlo(10_000, 10_000, SEED),
    );
    let combined = 3.0 * (r.lhs.std_error.powi(2) + r.rhs.total_err.powi(2)).sqrt();
    let agree = r.gap.absolute <= combined;
    let real = r.rhs.correctional.abs() > 5.0 * r.rhs.correctional_err;
    Outcome::new(
        agree && real,
        format!(
            "lhs {:.4} vs mmse+corr {:.4}: gap {:.4} vs 3 combined se {:.4}; correction {:.4} = {:.0} se; \
             gap against the MMSE term alone {:.4}",
            r.lhs.value,
            r.rhs.total,
            r.gap.absolute,
            combined,
            r.rhs.correctional,
            r.rhs.correctional / r.rhs.correctional_err,
            r.diagnostics["mmse_only_gap"]
        ),
    )
}

fn c4_no_feedback() -> Outcome {
    let memory = drift(
        "memory",
        &[
            ("input_tap".to_string(), 0.5),
            ("output_tap".to_string(), 0.0),
        ]
        .into(),
    )
    .unwrap();
    let message = MessagePrior::Gaussian {
        mean: vec![0.0; 3],
        cov: vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ],
    };
    let cases: Vec<(&str, AnySpec, Budget)> = vec![
        (
            "scalar gaussian (mc)",
            snr_spec(1.0),
            Budget::monte_carlo(4_000, 4_000, SEED),
        ),
        (
            "memory n=3 (mc)",
            AnySpec::System(SystemSpec::new(3, memory, message, 1.0)),
            Budget::monte_carlo(4_000, 4_000, SEED),
        ),
        (
            "linear n=2 no feedback (oracle)",
            AnySpec::Linear(linear_feedback(0.0, 1.0)),
            Budget::default(),
        ),
        (
            "binary input (grid)",
            AnySpec::Scalar(immse::builtins::binary_input()),
            Budget::default(),
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, spec, budget) in cases {
        let ext = run(IdentityId::DtFeedbackSnr, &spec, &budget);
        let base = run(IdentityId::ImmseSnr, &spec, &budget);
        let zero = ext.rhs.correctional.abs() <= 3.0 * ext.rhs.correctional_err;
        let coincide = (ext.rhs.total - base.rhs.total).abs() <= base.tolerance
            && (ext.lhs.value - base.lhs.value).abs() <= base.tolerance;
        ok &= zero && coincide && ext.verdict == Verdict::Pass && base.verdict == Verdict::Pass;
        parts.push(format!(
            "{name}: correction {:.1e} ± {:.1e}, totals {:.5}/{:.5} ({:?}/{:?})",
            ext.rhs.correctional,
            ext.rhs.correctional_err,
            ext.rhs.total,
            base.rhs.total,
            ext.verdict,
            base.verdict
        ));
    }
    Outcome::new(ok, parts.join("; "))
}

fn c5_symmetrized() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for alpha in [0.5, -0.8, 1.5] {
        let spec = AnySpec::Linear(linear_feedback(alpha, 1.0));
        let ext = run(IdentityId::DtExtended, &spec, &Budget::default());
        let sym = run(IdentityId::DtSymmetrized, &spec, &Budget::default());
        let diff = (ext.rhs.total - sym.rhs.total).abs();
        ok &= diff <= 1e-10;
        parts.push(format!("oracle alpha {alpha}: |total diff| {diff:.1e}"));
    }
    let r = run(
        IdentityId::DtExtended,
        &AnySpec::Linear(linear_feedback_n2()),
        &Budget::monte_carlo(4_000, 4_000, SEED),
    );
    let sym = r.diagnostics["correctional_symmetrized"];
    let sym_err = r.diagnostics["correctional_symmetrized_err"];
    let diff = (r.rhs.correctional - sym).abs();
    let bound = 3.0 * (r.rhs.correctional_err.powi(2) + sym_err.powi(2)).sqrt();
    ok &= diff <= bound;
    parts.push(format!(
        "mc: corrections {:.4} vs {sym:.4}, diff {diff:.1e} <= {bound:.1e}",
        r.rhs.correctional
    ));
    Outcome::new(ok, parts.join("; "))
}

fn c6_debruijn() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (prior, bound, label) in [
        (Prior::standard_gaussian(), 1e-8, "gaussian"),
        (Prior::binary(), 1e-4, "binary"),
    ] {
        for t in [0.5, 1.0, 2.0] {
            let spec = AnySpec::DeBruijn(DeBruijnSpec {
                prior: prior.clone(),
                t,
            });
            let r = run(IdentityId::Debruijn, &spec, &Budget::default());
            ok &= r.gap.absolute <= bound && r.verdict == Verdict::Pass;
            parts.push(format!("{label} t={t}: gap {:.1e}", r.gap.absolute));
        }
    }
    Outcome::new(ok, parts.join("; "))
}

fn c7_remark_ratio() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (variance, t) in [(1.0, 0.5), (1.0, 1.0), (1.0, 2.0), (3.0, 0.5), (1.0, 100.0)] {
        let spec = DeBruijnSpec {
            prior: Prior::Gaussian {
                mean: 0.0,
                variance,
            },
            t,
        };
        let r = check_debruijn_remark(&spec, &Budget::default()).expect("remark check runs");
        let ratio = r.diagnostics["ratio"];
        ok &= (ratio - 2.0).abs() <= 0.05 && !r.flags.is_empty();
        parts.push(format!(
            "var {variance} t={t}: ratio {ratio:.6} (flagged: {})",
            !r.flags.is_empty()
        ));
    }
    Outcome::new(ok, parts.join("; "))
}

fn c8_continuous_time() -> Outcome {
    let spec = ct_constant_message();
    let mi = ct_mi(&spec, 10_000, 10_000, SEED).expect("ct_mi runs");
    let target = 0.5 * LN_2;
    let mi_rel = (mi.value - target).abs() / target;
    let r = run(
        IdentityId::CtNofeedback,
        &AnySpec::Ct(spec.clone()),
        &Budget::monte_carlo(10_000, 10_000, SEED),
    );
    let em = solve_em(&spec, 1_000, SEED).expect("euler-maruyama runs");
    let picard = solve_picard(&spec, 1_000, SEED, 500, 1e-12).expect("picard runs");
    let sup = em.sup_distance(&picard);
    let ok = mi_rel <= 0.02
        && r.verdict == Verdict::Pass
        && r.gap.relative <= 0.03
        && sup < 10.0 * spec.step;
    Outcome::new(
        ok,
        format!(
            "ct_mi {:.5} ± {:.5} vs ½ln2 {target:.5} ({:.2}%); identity gap {:.2}% ({:?}); EM-Picard sup {sup:.2e} vs 10Δ {:.0e}",
            mi.value,
            mi.std_error,
            100.0 * mi_rel,
            100.0 * r.gap.relative,
            r.verdict,
            10.0 * spec.step
        ),
    )
}

fn ct_builtins() -> Vec<(&'static str, CTSystemSpec)> {
    let sat = ct_drift("saturating_feedback", &Default::default()).unwrap();
    vec![
        ("constant_message", ct_constant_message()),
        ("linear_feedback", ct_linear_feedback()),
        (
            "saturating_feedback",
            CTSystemSpec::new(
                1.0,
                Arc::clone(&sat),
                MessagePrior::scalar_gaussian(0.0, 1.0),
                1.0,
            ),
        ),
    ]
}

fn c9_girsanov() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, spec) in ct_builtins() {
        let e = girsanov_normalization(&spec, &[1.0], 20_000, SEED).expect("normalization runs");
        ok &= (e.value - 1.0).abs() <= 3.0 * e.std_error;
        parts.push(format!("{name}: {:.4} ± {:.4}", e.value, e.std_error));
    }
    Outcome::new(ok, parts.join("; "))
}

/// Reduced-budget versions of every criterion's computations, serialized.
fn fingerprint() -> String {
    let mut out = Vec::new();
    let mc = Budget::monte_carlo(300, 300, SEED);
    let ct = Budget::monte_carlo(100, 100, SEED);
    let mut push = |r: IdentityReport| out.push(serde_json::to_string(&r).unwrap());
    push(run(
        IdentityId::ImmseSnr,
        &snr_spec(1.0),
        &Budget::default(),
    ));
    push(run(IdentityId::ImmseSnr, &snr_spec(1.0), &mc));
    push(run(
        IdentityId::DtExtended,
        &AnySpec::Linear(random_linear(3, 0.5, 0)),
        &Budget::default(),
    ));
    push(run(
        IdentityId::DtFeedbackSnr,
        &AnySpec::Linear(linear_feedback_n2()),
        &mc,
    ));
    push(run(
        IdentityId::DtSymmetrized,
        &AnySpec::Linear(linear_feedback_n2()),
        &mc,
    ));
    push(run(
        IdentityId::Debruijn,
        &AnySpec::DeBruijn(debruijn_gaussian()),
        &Budget::default(),
    ));
    push(check_debruijn_remark(&debruijn_gaussian(), &Budget::default()).unwrap());
    push(run(
        IdentityId::CtNofeedback,
        &AnySpec::Ct(ct_constant_message()),
        &ct,
    ));
    push(run(
        IdentityId::CtExtended,
        &AnySpec::Ct(ct_linear_feedback()),
        &ct,
    ));
    out.push(
        serde_json::to_string(&ct_mi(&ct_constant_message(), 100, 100, SEED).unwrap()).unwrap(),
    );
    for (_, spec) in ct_builtins() {
        out.push(
            serde_json::to_string(&girsanov_normalization(&spec, &[1.0], 500, SEED).unwrap())
                .unwrap(),
        );
        let em = solve_em(&spec, 50, SEED).unwrap();
        let picard = solve_picard(&spec, 50, SEED, 500, 1e-12).unwrap();
        out.push(format!(
            "{:?}",
            (em.y_paths.as_slice(), picard.y_paths.as_slice())
        ));
    }
    out.join("\n")
}

fn in_pool(threads: usize) -> String {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(fingerprint)
}

fn c10_determinism() -> Outcome {
    let one = in_pool(1);
    let four = in_pool(4);
    let again = in_pool(4);
    Outcome::new(
        one == four && four == again,
        format!(
            "{} bytes; 1 vs 4 threads identical: {}; repeat identical: {}",
            one.len(),
            one == four,
            four == again
        ),
    )
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            title: "memoryless I-MMSE",
            limit: Some(Duration::from_secs(30)),
            run: c1_memoryless,
        },
        Criterion {
            id: 2,
            title: "linear oracle, extended identity",
            limit: Some(Duration::from_secs(60)),
            run: c2_linear_oracle,
        },
        Criterion {
            id: 3,
            title: "feedback extension, Monte Carlo",
            limit: Some(Duration::from_secs(300)),
            run: c3_feedback_mc,
        },
        Criterion {
            id: 4,
            title: "no-feedback reduction",
            limit: None,
            run: c4_no_feedback,
        },
        Criterion {
            id: 5,
            title: "symmetrized correction",
            limit: None,
            run: c5_symmetrized,
        },
        Criterion {
            id: 6,
            title: "de Bruijn identity",
            limit: Some(Duration::from_secs(30)),
            run: c6_debruijn,
        },
        Criterion {
            id: 7,
            title: "de Bruijn remark ratio",
            limit: None,
            run: c7_remark_ratio,
        },
        Criterion {
            id: 8,
            title: "continuous time, constant message",
            limit: Some(Duration::from_secs(600)),
            run: c8_continuous_time,
        },
        Criterion {
            id: 9,
            title: "Girsanov normalization",
            limit: None,
            run: c9_girsanov,
        },
        Criterion {
            id: 10,
            title: "determinism",
            limit: None,
            run: c10_determinism,
        },
    ];
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = Vec::new();
    for c in criteria
        .iter()
        .filter(|c| selected.is_empty() || selected.contains(&c.id))
    {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let in_time = c.limit.is_none_or(|l| elapsed <= l);
        let pass = outcome.pass && in_time;
        let limit = c
            .limit
            .map_or(String::new(), |l| format!(" / limit {}s", l.as_secs()));
        println!(
            "criterion {:>2} {} {}: {} [{:.1}s{limit}]",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.title,
            outcome.detail,
            elapsed.as_secs_f64()
        );
        if !pass {
            failed.push(c.id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
