//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Exits 0 after reporting unless `BOARS_ACCEPTANCE_STRICT=1`, in which case
//! any failure makes the process exit 1.

mod common;

use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use boars::engine::{random_baseline, run_boars, BoConfig, Experiment, Pending, SatisfactionContext, Status, VoteContext, Voter};
use boars::grid::{generate_synthetic_grid, GridIndex, SimulatedInstrument, Spectrum, SyntheticConfig};
use boars::record::{Event, RunRecord};
use boars::recommender::{Phase, Preference, TargetState, Vote};
use boars::session::{ReplayVoter, ThresholdVoter};
use boars::similarity::{auto_objective, ssim, FrozenTarget, SsimParams};
use boars::surrogate::{nll, nll_with_grad, FeatureNet, GpModel, Inputs, Kernel, KernelKind, Stationary};
use common::{dense_posterior, instrument, quick_config, small_grid, ssim_brute};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {:.1}s, limit {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn ssim_oracle() -> Outcome {
    let started = Instant::now();
    let params = SsimParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut worst_self: f64 = 0.0;
    for _ in 0..50 {
        let a: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
        let got = ssim(&a, &b, &params).map_err(|e| e.to_string())?;
        worst = worst.max((got - ssim_brute(&a, &b, 7, 0.01, 0.03, 1.0)).abs());
        worst_self = worst_self.max((ssim(&a, &a, &params).map_err(|e| e.to_string())? - 1.0).abs());
    }
    check(worst <= 1e-9, || format!("max |ssim - oracle| = {worst:e}"))?;
    check(worst_self <= 1e-12, || format!("max |ssim(x,x) - 1| = {worst_self:e}"))?;
    within_budget(started.elapsed(), Duration::from_secs(1))?;
    Ok(format!("max error {worst:.1e}, self {worst_self:.1e}"))
}

fn random_kernel(rng: &mut ChaCha8Rng, i: usize, dim: usize) -> Kernel {
    let var = rng.gen_range(0.3..2.0);
    match i % 3 {
        0 => Kernel::plain(Stationary::rbf(var, (0..dim).map(|_| rng.gen_range(0.5..2.0)).collect())),
        1 => Kernel::plain(Stationary::periodic(var, rng.gen_range(0.8..2.0), rng.gen_range(1.5..4.0))),
        _ => {
            let net = FeatureNet::new_seeded(&[dim, 6, 2], rng).unwrap();
            Kernel::deep(net, Stationary::rbf(var, vec![rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0)])).unwrap()
        }
    }
}

fn rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(0.0..3.0)).collect()).collect()
}

fn gp_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut mean_err, mut var_err, mut grad_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 0..20 {
        let (n, dim) = (2 + i % 19, 3);
        let kernel = random_kernel(&mut rng, i, dim);
        let x = rows(&mut rng, n, dim);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xstar = rows(&mut rng, 10, dim);
        let model = GpModel::condition(kernel.clone(), Inputs::from_rows(&x).unwrap(), y.clone(), 1e-6, true)
            .map_err(|e| e.to_string())?;
        let (mean, var) = model.posterior_unclamped(&Inputs::from_rows(&xstar).unwrap()).map_err(|e| e.to_string())?;
        let (om, ov) = dense_posterior(&kernel, &x, &y, model.y_mean, model.jitter, &xstar);
        // variances are compared relative to the prior variance
        let prior = kernel.base.variance();
        for j in 0..xstar.len() {
            mean_err = mean_err.max((mean[j] - om[j]).abs() / om[j].abs().max(1.0));
            var_err = var_err.max((var[j] - ov[j]).abs() / prior);
        }

        // nll gradient against central differences on a jittered subset
        let m = n.min(6);
        let xi = Inputs::from_rows(&x[..m]).unwrap();
        let jitter = 1e-4;
        let (value, grad, _) = nll_with_grad(&kernel, &xi, &y[..m], jitter).map_err(|e| e.to_string())?;
        let params = kernel.params();
        let h = 1e-5;
        let roundoff = 1e3 * f64::EPSILON * value.abs().max(1.0) / h;
        for (k, g) in grad.iter().enumerate() {
            let mut shifted = kernel.clone();
            let mut p = params.clone();
            p[k] += h;
            shifted.set_params(&p);
            let up = nll(&shifted, &xi, &y[..m], jitter).map_err(|e| e.to_string())?;
            p[k] = params[k] - h;
            shifted.set_params(&p);
            let down = nll(&shifted, &xi, &y[..m], jitter).map_err(|e| e.to_string())?;
            let fd = (up - down) / (2.0 * h);
            let excess = ((g - fd).abs() - roundoff).max(0.0) / g.abs().max(fd.abs()).max(1e-12);
            grad_err = grad_err.max(excess);
        }
    }
    check(mean_err <= 1e-6, || format!("posterior mean relative error {mean_err:e}"))?;
    check(var_err <= 1e-6, || format!("posterior variance relative error {var_err:e}"))?;
    check(grad_err <= 1e-4, || format!("gradient relative error {grad_err:e}"))?;
    within_budget(started.elapsed(), Duration::from_secs(30))?;
    Ok(format!("mean {mean_err:.1e}, variance {var_err:.1e}, gradient {grad_err:.1e}"))
}

fn spectrum(values: &[f64]) -> Spectrum {
    Spectrum { values: values.to_vec(), source: GridIndex::new(0, 0) }
}

/// Votes from a fixed script and is satisfied once it runs out.
struct Scripted {
    votes: Vec<i64>,
    cast: usize,
}

impl Voter for Scripted {
    fn vote(&mut self, _ctx: &VoteContext<'_>) -> boars::Result<(Vote, Preference)> {
        let v = self.votes[self.cast];
        self.cast += 1;
        Ok((Vote::new(v)?, Preference::new(0.5)?))
    }

    fn satisfied(&mut self, ctx: &SatisfactionContext<'_>) -> boars::Result<bool> {
        Ok(ctx.votes_cast >= self.votes.len())
    }
}

fn target_algebra() -> Outcome {
    const A: [f64; 4] = [0.0, 0.2, 0.6, 1.0];
    const B: [f64; 4] = [0.0, 0.6, 0.2, 1.0];
    // (votes as (spectrum, vote, preference), expected target, expected weight), evaluated by hand
    let cases: Vec<(Vec<(Vec<f64>, i64, f64)>, Option<Vec<f64>>, f64)> = vec![
        (vec![(A.to_vec(), 2, 0.5)], Some(A.to_vec()), 2.0),
        (vec![(A.to_vec(), 1, 0.0)], Some(A.to_vec()), 1.0),
        (vec![(A.to_vec(), 0, 0.5)], None, 0.0),
        (vec![(A.to_vec(), 2, 0.5), (B.to_vec(), 2, 0.5)], Some(vec![0.0, 0.4, 0.4, 1.0]), 4.0),
        (vec![(A.to_vec(), 2, 0.5), (B.to_vec(), 2, 0.0)], Some(A.to_vec()), 4.0),
        (vec![(A.to_vec(), 2, 0.5), (B.to_vec(), 1, 1.0)], Some(B.to_vec()), 3.0),
        (vec![(A.to_vec(), 2, 0.5), (B.to_vec(), 0, 1.0)], Some(A.to_vec()), 2.0),
        (vec![(A.to_vec(), 2, 0.5), (B.to_vec(), 1, 0.5)], Some(vec![0.0, 0.5 / 1.5, 0.7 / 1.5, 1.0]), 3.0),
        (vec![(A.to_vec(), 2, 0.5), (B.to_vec(), 2, 0.25)], Some(vec![0.0, 0.3, 0.5, 1.0]), 4.0),
        (
            vec![(A.to_vec(), 1, 0.5), (B.to_vec(), 1, 0.5), (vec![0.0, 1.0, 0.0, 1.0], 2, 0.5)],
            Some(vec![0.0, 0.7, 0.2, 1.0]),
            4.0,
        ),
        // the blend [0.5, 0.4, 0.4, 0.5] is min-max normalized again
        (vec![(A.to_vec(), 1, 0.5), (vec![1.0, 0.6, 0.2, 0.0], 1, 0.5)], Some(vec![1.0, 0.0, 0.0, 1.0]), 2.0),
        (vec![(vec![2.0, 4.0, 6.0, 10.0], 1, 0.5)], Some(vec![0.0, 0.25, 0.5, 1.0]), 1.0),
        (vec![(A.to_vec(), 0, 1.0), (B.to_vec(), 0, 0.0), (B.to_vec(), 2, 0.0)], Some(B.to_vec()), 2.0),
    ];
    for (i, (votes, want, weight)) in cases.iter().enumerate() {
        let mut st = TargetState::new();
        for (s, v, p) in votes {
            st.record_vote(GridIndex::new(0, 0), &spectrum(s), Vote::new(*v).unwrap(), Preference::new(*p).unwrap())
                .map_err(|e| format!("case {i}: {e}"))?;
        }
        let got = st.current_target();
        let ok = match (&got, want) {
            (Some(g), Some(w)) => g.iter().zip(w).all(|(a, b)| (a - b).abs() <= 1e-12),
            (None, None) => true,
            _ => false,
        };
        check(ok && st.vote_weight() == *weight, || format!("case {i}: target {got:?} weight {}", st.vote_weight()))?;
    }

    // a ten-vote script freezes at the tenth vote
    let grid = small_grid(16, 5);
    let mut voter = Scripted { votes: vec![0, 0, 1, 2, 0, 1, 2, 2, 1, 0], cast: 0 };
    let record = run_boars(quick_config(4, 12), instrument(&grid), &mut voter).map_err(|e| e.to_string())?;
    let votes: Vec<u64> = record.events.iter().filter(|e| matches!(e, Event::Vote { .. })).map(Event::seq).collect();
    let freeze = record.events.iter().find(|e| matches!(e, Event::Freeze { .. })).map(Event::seq);
    check(votes.len() == 10 && freeze.is_some_and(|f| f > votes[9]), || format!("{} votes, freeze at {freeze:?}", votes.len()))?;
    let replayed = run_boars(quick_config(4, 12), instrument(&grid), &mut ReplayVoter::from_events(&record.events))
        .map_err(|e| e.to_string())?;
    check(replayed.target == record.target, || "replayed run ends on a different target".into())?;
    Ok(format!("{} hand cases, freeze after vote 10", cases.len()))
}

fn freeze_semantics() -> Outcome {
    let grid = small_grid(20, 4);
    let config = quick_config(6, 20);
    let mut exp = Experiment::new(config.clone(), instrument(&grid)).map_err(|e| e.to_string())?;
    let mut asked = 0;
    let mut frozen: Option<Vec<f64>> = None;
    let mut steps_after = 0;
    loop {
        let status = exp.step().map_err(|e| e.to_string())?;
        if let Some(t) = &frozen {
            let now = exp.target_state().current_target();
            check(now.as_ref() == Some(t), || "target changed after the freeze".into())?;
            steps_after += 1;
        } else if exp.target_state().phase() == Phase::Automated {
            frozen = exp.target_state().current_target();
        }
        match status {
            Status::Finished => break,
            Status::AwaitingHuman => match exp.pending().cloned().unwrap() {
                Pending::Vote { id, .. } => exp.submit_vote(Some(id), Vote::GOOD, Preference::new(0.5).unwrap()),
                Pending::Satisfaction { id, .. } => {
                    asked += 1;
                    exp.submit_satisfaction(Some(id), asked == 8)
                }
            }
            .map_err(|e| e.to_string())?,
            _ => {}
        }
    }
    let frozen = frozen.ok_or("the target never froze")?;
    let target = FrozenTarget::new(frozen.clone()).map_err(|e| e.to_string())?;
    let record = exp.record();
    for (idx, y) in record.explored.iter().zip(&record.y) {
        let s = grid.spectrum(*idx).map_err(|e| e.to_string())?;
        let psi = auto_objective(&target, &s, &config.ssim).map_err(|e| e.to_string())?;
        check(psi.to_bits() == y.to_bits(), || format!("y at {idx:?} is {y}, not {psi}"))?;
    }
    check(record.target.as_ref() == Some(&frozen), || "record target differs".into())?;
    Ok(format!("{} samples rescored, target fixed over {steps_after} steps", record.y.len()))
}

struct Benchmark {
    deep: Vec<RunRecord>,
    deep_mse: Vec<f64>,
    periodic_mse: Vec<f64>,
    random_mse: Vec<f64>,
    elapsed: Duration,
}

fn run_benchmark() -> Result<Benchmark, String> {
    let started = Instant::now();
    let grid_config = SyntheticConfig { correlation: 0.2, ..SyntheticConfig::default() };
    let grid = Arc::new(generate_synthetic_grid(&grid_config, boars::DEFAULT_GRID_SEED).map_err(|e| e.to_string())?);
    let mut bench = Benchmark { deep: vec![], deep_mse: vec![], periodic_mse: vec![], random_mse: vec![], elapsed: Duration::ZERO };
    for seed in 1..=5 {
        for kernel in ["deep", "periodic"] {
            let config = BoConfig { kernel: kernel.parse::<KernelKind>().unwrap(), seed, ..BoConfig::default() };
            let record = run_boars(config.clone(), Box::new(SimulatedInstrument::new(grid.clone())), &mut ThresholdVoter::default())
                .map_err(|e| e.to_string())?;
            let mse = record.mse().ok_or(format!("seed {seed} {kernel}: no frozen target"))?;
            if kernel == "deep" {
                let target = FrozenTarget::new(record.target.clone().unwrap()).map_err(|e| e.to_string())?;
                let base = random_baseline(&config, &grid, &target, None).map_err(|e| e.to_string())?;
                bench.random_mse.push(base.mse().ok_or("baseline has no error map")?);
                bench.deep_mse.push(mse);
                bench.deep.push(record);
            } else {
                bench.periodic_mse.push(mse);
            }
        }
    }
    bench.elapsed = started.elapsed();
    Ok(bench)
}

fn benchmark(bench: &Result<Benchmark, String>) -> Outcome {
    let b = bench.as_ref().map_err(Clone::clone)?;
    let (deep, periodic, random) = (median(b.deep_mse.clone()), median(b.periodic_mse.clone()), median(b.random_mse.clone()));
    let detail = format!("median mse deep {deep:.4}, periodic {periodic:.4}, random {random:.4}");
    let mut failed = Vec::new();
    if deep > 0.08 {
        failed.push("(a) deep median above 0.08");
    }
    if deep > periodic {
        failed.push("(b) deep median above periodic");
    }
    if deep > random {
        failed.push("(c) BO median above random");
    }
    if b.elapsed >= Duration::from_secs(600) {
        failed.push("runtime over 10 min");
    }
    if failed.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", failed.join(", ")))
    }
}

fn cli_run(out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_boars"))
        .args(["--seed", "3", "--iterations", "40", "--baseline", "--out"])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    check(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cli_run(&a)?;
    cli_run(&b)?;
    let files = ["run.json", "maps/final.csv", "events.jsonl", "model.json", "truth.csv", "error.csv", "baseline/run.json"];
    for file in files {
        let (x, y) = (std::fs::read(a.join(file)), std::fs::read(b.join(file)));
        check(matches!((&x, &y), (Ok(x), Ok(y)) if x == y), || format!("{file} differs"))?;
    }
    Ok(format!("{} files byte-identical", files.len()))
}

fn budget(bench: &Result<Benchmark, String>) -> Outcome {
    let b = bench.as_ref().map_err(Clone::clone)?;
    for record in &b.deep {
        let distinct = record.explored.iter().collect::<std::collections::HashSet<_>>().len();
        check(distinct == 210 && record.explored.len() == 210, || format!("explored {distinct} distinct of {}", record.explored.len()))?;
    }
    let grid = Arc::new(generate_synthetic_grid(&SyntheticConfig::default(), boars::DEFAULT_GRID_SEED).map_err(|e| e.to_string())?);
    let config = BoConfig { iterations: 100, seed: 11, ..BoConfig::default() };
    let record = run_boars(config, Box::new(SimulatedInstrument::new(grid)), &mut ThresholdVoter::default()).map_err(|e| e.to_string())?;
    let distinct = record.explored.iter().collect::<std::collections::HashSet<_>>().len();
    check(distinct == 110, || format!("M=100 explored {distinct} distinct"))?;
    Ok(format!("{} runs at 210, one at 110", b.deep.len()))
}

fn main() -> ExitCode {
    let bench = std::cell::OnceCell::new();
    let criteria: [(&str, &dyn Fn() -> Outcome); 7] = [
        ("ssim oracle equivalence", &ssim_oracle),
        ("gp oracle equivalence", &gp_oracle),
        ("target update algebra", &target_algebra),
        ("freeze semantics", &freeze_semantics),
        ("synthetic benchmark", &|| benchmark(bench.get_or_init(run_benchmark))),
        ("determinism", &determinism),
        ("budget accounting", &|| budget(bench.get_or_init(run_benchmark))),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = f();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {} {name}: {detail} ({secs:.1}s)", i + 1),
            Err(why) => {
                failures += 1;
                println!("FAIL criterion {} {name}: {why} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    let strict = std::env::var("BOARS_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failures > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
