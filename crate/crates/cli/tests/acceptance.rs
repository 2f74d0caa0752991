//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails or overruns its time limit.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use giht::groups::{coverage_energy, max_support_size, DEFAULT_ENUM_GUARD};
use giht::objective::{check_gradient, estimate_restricted_spectrum};
use giht::project::{exact_project_bruteforce, exact_project_disjoint, greedy_project};
use giht::rng::stream;
use giht::synth::generate;
use giht::{
    iht_solve, GroupLayout, IhtConfig, Projector, RegressionProblem, SogBudget, StepRule, SynthSpec,
};
use giht_cli::{run_phase_transition, PhaseGrid};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    0.5 * (v[(m - 1) / 2] + v[m / 2])
}

/// Random layout on `p` coordinates with `m` groups of 1 to 6 coordinates.
fn random_layout<R: Rng>(rng: &mut R, p: usize, m: usize) -> GroupLayout {
    let groups = (0..m)
        .map(|_| {
            let size = rng.random_range(1..=p.min(6));
            rand::seq::index::sample(rng, p, size).into_vec()
        })
        .collect();
    GroupLayout::new(p, groups).unwrap()
}

/// Mix of small integers (frequent ties) and continuous values.
fn random_vector<R: Rng>(rng: &mut R, p: usize) -> Vec<f64> {
    (0..p)
        .map(|_| {
            if rng.random_bool(0.3) {
                f64::from(rng.random_range(-3i32..=3))
            } else {
                rng.sample(StandardNormal)
            }
        })
        .collect()
}

fn approximation_bound() -> Verdict {
    let mut held = 0;
    let mut worst = f64::INFINITY;
    for case in 0..200u64 {
        let mut rng = stream(case, 101);
        let p = rng.random_range(4..=24);
        let m = rng.random_range(2..=10);
        let layout = random_layout(&mut rng, p, m);
        let g = random_vector(&mut rng, p);
        let k = rng.random_range(1..=3usize.min(m));
        let k_tilde = rng.random_range(k..=(3 * k).min(m));
        let opt = exact_project_bruteforce(&g, k, &layout, DEFAULT_ENUM_GUARD).unwrap();
        let greedy = greedy_project(&g, k_tilde, &layout).unwrap();
        let on_opt: f64 = opt.selected.coords.iter().map(|&j| g[j] * g[j]).sum();
        let bound = (-(k_tilde as f64) / k as f64).exp() * on_opt + sq_dist(&opt.u, &g);
        let slack = bound - sq_dist(&greedy.u, &g);
        worst = worst.min(slack);
        if slack >= -1e-9 {
            held += 1;
        }
    }
    verdict(
        held == 200,
        format!("{held}/200 hold, min slack {worst:.3e}"),
    )
}

fn submodularity() -> Verdict {
    let mut violations = 0;
    for case in 0..500u64 {
        let mut rng = stream(case, 102);
        let p = rng.random_range(3..=20);
        let m = rng.random_range(2..=10);
        let layout = random_layout(&mut rng, p, m);
        let g = random_vector(&mut rng, p);
        let t: Vec<usize> = (0..m).filter(|_| rng.random_bool(0.5)).collect();
        let s: Vec<usize> = t.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
        let i = rng.random_range(0..m);
        let f = |set: &[usize]| coverage_energy(set, &g, &layout).unwrap();
        let with_i = |set: &[usize]| [set, &[i]].concat();
        if f(&s) > f(&t) + 1e-12 {
            violations += 1;
        }
        if f(&with_i(&s)) - f(&s) < f(&with_i(&t)) - f(&t) - 1e-12 {
            violations += 1;
        }
    }
    verdict(
        violations == 0,
        format!("{violations} violations over 500 triples"),
    )
}

fn disjoint_exactness() -> Verdict {
    let mut agree = 0;
    for case in 0..100u64 {
        let mut rng = stream(case, 103);
        let m = rng.random_range(1..=12);
        let b = rng.random_range(1..=5);
        let mut perm: Vec<usize> = (0..m * b).collect();
        perm.shuffle(&mut rng);
        let layout =
            GroupLayout::new(m * b, perm.chunks(b).map(<[usize]>::to_vec).collect()).unwrap();
        let g = random_vector(&mut rng, m * b);
        let k = rng.random_range(1..=m);
        let a = greedy_project(&g, k, &layout).unwrap();
        let e = exact_project_disjoint(&g, k, &layout).unwrap();
        let x = exact_project_bruteforce(&g, k, &layout, DEFAULT_ENUM_GUARD).unwrap();
        if a.u == e.u && a.u == x.u && a.selected == e.selected && a.selected == x.selected {
            agree += 1;
        }
    }
    verdict(agree == 100, format!("{agree}/100 layouts identical"))
}

fn gradient_correctness() -> Verdict {
    let mut worst: f64 = 0.0;
    for case in 0..50u64 {
        let mut rng = stream(case, 104);
        let n = rng.random_range(5..=60);
        let p = rng.random_range(2..=30);
        let rows: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let prob = RegressionProblem::from_rows(n, p, &rows, y).unwrap();
        let w: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        worst = worst.max(check_gradient(&prob, &w, 1e-5));
    }
    verdict(worst < 1e-6, format!("max relative error {worst:.3e}"))
}

fn noiseless_recovery() -> Verdict {
    let mut good = 0;
    let mut notes = Vec::new();
    for seed in 0..10 {
        let spec = SynthSpec {
            num_groups: 40,
            group_size: 10,
            overlap: 2,
            k_star: 4,
            k2_star: None,
            kappa: 1.0,
            noise_lambda: 0.0,
            n: 400,
            rotate: false,
            seed,
        };
        let inst = generate(&spec).unwrap();
        let config = IhtConfig {
            step: StepRule::InverseCurvature,
            max_iters: 500,
            seed,
            ..IhtConfig::new(Projector::Greedy { k: 8 })
        };
        let (w, trace) =
            iht_solve(&inst.problem, &inst.layout, &config, Some(&inst.w_star)).unwrap();
        let mut errs = vec![inst.relative_error(&vec![0.0; inst.layout.p()])];
        errs.extend(trace.error_to_reference.as_ref().unwrap());
        let ratio = median(errs.windows(2).take(20).map(|e| e[1] / e[0]).collect());
        let rel = inst.relative_error(&w);
        if rel < 1e-6 && ratio < 1.0 {
            good += 1;
        }
        notes.push(format!("{rel:.0e}@{}", trace.iterations_run));
    }
    verdict(
        good >= 9,
        format!("{good}/10 seeds; rel.err@iters {}", notes.join(" ")),
    )
}

fn fc_improvement() -> Verdict {
    let mut monotone = 0;
    let mut fc_converged = 0;
    let mut fc_iters = Vec::new();
    let mut plain_iters = Vec::new();
    for seed in 0..10 {
        let spec = SynthSpec {
            num_groups: 100,
            group_size: 25,
            overlap: 5,
            k_star: 10,
            k2_star: None,
            kappa: 10.0,
            noise_lambda: 0.1,
            n: 1000,
            rotate: false,
            seed,
        };
        let inst = generate(&spec).unwrap();
        let base = IhtConfig {
            seed,
            ..IhtConfig::new(Projector::Greedy { k: 20 })
        };
        let fc = IhtConfig {
            full_corrections: true,
            ..base.clone()
        };
        let (_, t_fc) = iht_solve(&inst.problem, &inst.layout, &fc, None).unwrap();
        let (_, t_plain) = iht_solve(&inst.problem, &inst.layout, &base, None).unwrap();
        if t_fc
            .objective_values
            .windows(2)
            .all(|v| v[1] <= v[0] + 1e-12)
        {
            monotone += 1;
        }
        if t_fc.converged {
            fc_converged += 1;
        }
        fc_iters.push(t_fc.iterations_run as f64);
        plain_iters.push(t_plain.iterations_run as f64);
    }
    let (mf, mp) = (median(fc_iters), median(plain_iters));
    verdict(
        monotone == 10 && fc_converged == 10 && mf <= mp,
        format!("monotone {monotone}/10, converged {fc_converged}/10, median iterations FC {mf} vs plain {mp}"),
    )
}

fn statistical_consistency() -> Verdict {
    let (m, lambda, kappa, k_star) = (100usize, 0.1, 1.0, 5usize);
    let ns = [250usize, 500, 1000, 2000, 4000];
    let layout = giht::synth::contiguous_layout(m, 10, 2).unwrap();
    let s_upper = max_support_size(&layout, k_star).unwrap().upper_bound as f64;
    let mut medians = Vec::new();
    let mut within = true;
    let mut seed_exceedances = 0;
    for &n in &ns {
        let rate = lambda
            * kappa
            * ((s_upper + kappa * kappa * k_star as f64 * (m as f64).ln()) / n as f64).sqrt();
        let errs: Vec<f64> = (0..20)
            .map(|seed| {
                let spec = SynthSpec {
                    num_groups: m,
                    group_size: 10,
                    overlap: 2,
                    k_star,
                    k2_star: None,
                    kappa,
                    noise_lambda: lambda,
                    n,
                    rotate: false,
                    seed,
                };
                let inst = generate(&spec).unwrap();
                let config = IhtConfig {
                    full_corrections: true,
                    seed,
                    ..IhtConfig::new(Projector::Greedy { k: 2 * k_star })
                };
                let (w, _) = iht_solve(&inst.problem, &inst.layout, &config, None).unwrap();
                sq_dist(&w, &inst.w_star).sqrt()
            })
            .collect();
        seed_exceedances += errs.iter().filter(|&&e| e > 10.0 * rate).count();
        let med = median(errs);
        within &= med <= 10.0 * rate;
        medians.push(med);
    }
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = medians.iter().map(|m| format!("{m:.4}")).collect();
    verdict(
        decreasing && within,
        format!(
            "median errors {} (strictly decreasing: {decreasing}, within bound: {within}; \
             single runs above bound: {seed_exceedances}/100)",
            shown.join(" ")
        ),
    )
}

fn phase_transition() -> Verdict {
    let grid = PhaseGrid {
        base: SynthSpec {
            num_groups: 100,
            group_size: 15,
            overlap: 5,
            k_star: 5,
            k2_star: None,
            kappa: 1.0,
            noise_lambda: 0.0,
            n: 100,
            rotate: true,
            seed: 1,
        },
        ns: (1..=10).map(|i| 100 * i).collect(),
        kappas: vec![1.0, 50.0, 100.0],
        trials: 10,
        success_tol: 1e-3,
        config: IhtConfig {
            full_corrections: true,
            step: StepRule::RestrictedCurvature { trials: 20 },
            max_iters: 200,
            ..IhtConfig::new(Projector::Greedy { k: 10 })
        },
    };
    let p = grid.base.p();
    let cells = run_phase_transition(&grid).unwrap();
    let mut pass = true;
    let mut rows = Vec::new();
    for &kappa in &grid.kappas {
        let rates: Vec<f64> = cells
            .iter()
            .filter(|c| c.kappa == kappa)
            .map(|c| c.success_rate)
            .collect();
        let drops: Vec<f64> = rates
            .windows(2)
            .filter(|w| w[1] < w[0])
            .map(|w| w[0] - w[1])
            .collect();
        let shape = drops.len() <= 1 && drops.iter().all(|&d| d <= 0.1 + 1e-12);
        let reaches = cells
            .iter()
            .any(|c| c.kappa == kappa && c.n <= p && c.success_rate >= 0.9);
        pass &= shape && reaches;
        let shown: Vec<String> = rates.iter().map(|r| format!("{r:.1}")).collect();
        rows.push(format!("kappa {kappa}: {}", shown.join(" ")));
    }
    verdict(pass, rows.join("; "))
}

fn restricted_spectrum() -> Verdict {
    let (m, k, c) = (40usize, 2usize, 100.0f64);
    let layout = giht::synth::contiguous_layout(m, 10, 2).unwrap();
    let s_upper = max_support_size(&layout, k).unwrap().upper_bound as f64;
    let n = (c * (k as f64 * (m as f64).ln() + s_upper)).ceil() as usize;
    let (lo, hi) = (1.0 - 4.0 / c.sqrt(), 1.0 + 4.0 / c.sqrt());
    let mut inside = 0;
    let (mut min_alpha, mut max_l) = (f64::INFINITY, 0.0f64);
    for rep in 0..20 {
        let spec = SynthSpec {
            num_groups: m,
            group_size: 10,
            overlap: 2,
            k_star: k,
            k2_star: None,
            kappa: 1.0,
            noise_lambda: 0.0,
            n,
            rotate: false,
            seed: rep,
        };
        let inst = generate(&spec).unwrap();
        let est = estimate_restricted_spectrum(&inst.problem, &inst.layout, k, 50, rep).unwrap();
        min_alpha = min_alpha.min(est.alpha_hat);
        max_l = max_l.max(est.l_hat);
        if est.alpha_hat >= lo && est.l_hat <= hi {
            inside += 1;
        }
    }
    verdict(
        inside >= 19,
        format!(
            "n={n}: {inside}/20 within [{lo:.2}, {hi:.2}]; extremes {min_alpha:.3}..{max_l:.3}"
        ),
    )
}

fn sog_recovery() -> Verdict {
    let spec = |seed| SynthSpec {
        num_groups: 40,
        group_size: 20,
        overlap: 5,
        k_star: 3,
        k2_star: Some(8),
        kappa: 1.0,
        noise_lambda: 0.0,
        n: 400,
        rotate: false,
        seed,
    };
    let mut good = 0;
    for seed in 0..10 {
        let inst = generate(&spec(seed)).unwrap();
        let config = IhtConfig {
            step: StepRule::InverseCurvature,
            seed,
            ..IhtConfig::new(Projector::Sog(SogBudget { k1: 6, k2: 16 }))
        };
        let (w, trace) = iht_solve(&inst.problem, &inst.layout, &config, None).unwrap();
        let selected = &trace.support_history.last().unwrap().group_ids;
        let covered = inst
            .active_groups
            .group_ids
            .iter()
            .all(|g| selected.binary_search(g).is_ok());
        if covered && inst.relative_error(&w) < 1e-6 {
            good += 1;
        }
    }

    // k2 >= B: the SoG projection keeps whole groups.
    let mut identical = 0;
    for seed in 0..3 {
        let inst = generate(&spec(100 + seed)).unwrap();
        let base = IhtConfig {
            max_iters: 200,
            seed,
            ..IhtConfig::new(Projector::Greedy { k: 6 })
        };
        let sog = IhtConfig {
            projector: Projector::Sog(SogBudget { k1: 6, k2: 20 }),
            ..base.clone()
        };
        let a = iht_solve(&inst.problem, &inst.layout, &base, Some(&inst.w_star)).unwrap();
        let b = iht_solve(&inst.problem, &inst.layout, &sog, Some(&inst.w_star)).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.1.write_csv(&mut ca).unwrap();
        b.1.write_csv(&mut cb).unwrap();
        if a == b && ca == cb {
            identical += 1;
        }
    }
    verdict(
        good >= 9 && identical == 3,
        format!("{good}/10 seeds recovered; k2 >= B identical to group IHT in {identical}/3"),
    )
}

fn run_cli(args: &[&str], jobs: usize, dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_giht"))
        .args(args)
        .arg("--jobs")
        .arg(jobs.to_string())
        .current_dir(dir)
        .env_remove("GIHT_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let phase = [
        "phase-transition",
        "--num-groups",
        "100",
        "--group-size",
        "15",
        "--overlap",
        "5",
        "--k-star",
        "5",
        "--rotate",
        "true",
        "--fc",
        "--step",
        "restricted-curvature",
        "--max-iters",
        "200",
        "--n-list",
        "200,400",
        "--kappa-list",
        "1,50",
        "--trials",
        "3",
        "--seed",
        "1",
        "--out",
        "OUT",
    ];
    let solve = [
        "solve",
        "--num-groups",
        "40",
        "--group-size",
        "10",
        "--overlap",
        "2",
        "--k-star",
        "4",
        "--n",
        "400",
        "--step",
        "inverse-curvature",
        "--max-iters",
        "500",
        "--seed",
        "3",
        "--trace",
        "OUT",
        "--summary",
        "summary.json",
    ];
    let sog = [
        "sog-demo",
        "--num-groups",
        "40",
        "--group-size",
        "20",
        "--overlap",
        "5",
        "--k-star",
        "3",
        "--k2-star",
        "8",
        "--n",
        "400",
        "--step",
        "inverse-curvature",
        "--seed",
        "2",
        "--trace",
        "OUT",
        "--summary",
        "summary.json",
    ];
    let gen = [
        "gen",
        "--num-groups",
        "30",
        "--group-size",
        "10",
        "--overlap",
        "3",
        "--k-star",
        "3",
        "--n",
        "300",
        "--rotate",
        "true",
        "--kappa",
        "20",
        "--noise-lambda",
        "0.1",
        "--seed",
        "4",
        "--out",
        "OUT",
    ];
    let mut mismatched = Vec::new();
    for (name, args, file) in [
        ("phase-transition", &phase[..], None),
        ("solve", &solve[..], None),
        ("sog-demo", &sog[..], None),
        ("gen", &gen[..], Some("data.csv")),
    ] {
        let mut outputs = Vec::new();
        for (run, jobs) in [1, 1, 4].into_iter().enumerate() {
            let target = format!("{name}-{run}");
            let args: Vec<&str> = args
                .iter()
                .map(|a| if *a == "OUT" { target.as_str() } else { a })
                .collect();
            if let Err(e) = run_cli(&args, jobs, dir.path()) {
                return verdict(false, e);
            }
            let path = match file {
                Some(f) => dir.path().join(&target).join(f),
                None => dir.path().join(&target),
            };
            outputs.push(std::fs::read(path).unwrap());
        }
        if outputs[0].is_empty() || outputs[0] != outputs[1] || outputs[0] != outputs[2] {
            mismatched.push(name);
        }
    }
    verdict(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            "phase-transition, solve, sog-demo and gen CSVs byte-identical across runs and --jobs 1/4".into()
        } else {
            format!("differing output: {}", mismatched.join(", "))
        },
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Verdict, u64);
    let criteria: [Criterion; 11] = [
        ("greedy approximation bound", approximation_bound, 10),
        ("coverage submodularity", submodularity, 5),
        ("disjoint-group exactness", disjoint_exactness, 5),
        ("gradient correctness", gradient_correctness, 5),
        ("noiseless recovery and contraction", noiseless_recovery, 30),
        ("full-correction improvement", fc_improvement, 120),
        ("statistical consistency", statistical_consistency, 180),
        ("phase-transition monotonicity", phase_transition, 600),
        ("restricted spectrum", restricted_spectrum, 60),
        ("SoG recovery", sog_recovery, 60),
        ("determinism", determinism, 600),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.into_iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| *f == id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let pass = outcome.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {name}: {} ({}; {:.1}s of {limit}s)",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
