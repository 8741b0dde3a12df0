//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use nalgebra::DMatrix;

use declab::engine::{run_sweep, uniform_grid, Evolution, EvolutionConfig, SweepOutcome, SweepSpec};
use declab::measurement::{
    build_epr_scenario, build_pointer_superposition, dephase_pointer_superposition, default_pointer_state,
    pointer_mixture, system_split, MeasurementScenario, PointerSuperpositionSpec, PARTICLE_1, PARTICLE_2, SYSTEM,
};
use declab::measures::{chsh_max, quantum_relative_entropy, BipartiteSplit};
use declab::quantum::{haar_random_state, random_density, random_unitary, trace_distance, DensityOperator, Layout, RngStream, StateVector};
use declab::separability::{classical_correlation, closest_separable, pure_state_oracle, SolverSettings};
use declab::Complex64;
use decoherence_lab::config::{parse, SweepConfig};
use decoherence_lab::{run, Cli};

type Outcome = (bool, String);

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        if a == b {
            a
        } else {
            0.5 * (a + b)
        }
    }
}

/// 1-based ranks, ties sharing their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn shipped_sweep(name: &str) -> SweepSpec {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse::<SweepConfig>(&text, name).expect("config").to_spec().expect("spec")
}

fn rows_for(outcomes: &[SweepOutcome], d_m: usize, d_e: usize) -> Vec<declab::engine::SweepRow> {
    outcomes
        .iter()
        .filter(|o| o.cell.d_m == d_m && o.cell.d_e == d_e)
        .map(|o| o.summary())
        .collect()
}

fn relative_entropy_axioms() -> Outcome {
    let start = Instant::now();
    let mut rng = RngStream::new(2024, 0);
    let mut worst = [0.0f64; 4];
    let mut min_distinct = f64::INFINITY;
    let mut fails = 0;
    for k in 0..1000 {
        let d = 2 + k % 7;
        let (da, db) = match d {
            4 => (2, 2),
            6 => (2, 3),
            8 => (2, 4),
            _ => (d, 1),
        };
        let layout = Layout::from_dims(&[("A", da), ("B", db)]).unwrap();
        let rho = random_density(layout.clone(), &mut rng);
        let sigma = random_density(layout, &mut rng);
        let s = quantum_relative_entropy(&rho, &sigma).unwrap().value;
        let self_s = quantum_relative_entropy(&rho, &rho).unwrap().value;
        let u = random_unitary(d, &mut rng);
        let su = quantum_relative_entropy(&rho.conjugated(&u).unwrap(), &sigma.conjugated(&u).unwrap())
            .unwrap()
            .value;
        let sa = quantum_relative_entropy(&rho.partial_trace(&["A"]).unwrap(), &sigma.partial_trace(&["A"]).unwrap())
            .unwrap()
            .value;

        worst[0] = worst[0].max(-s);
        worst[1] = worst[1].max(self_s.abs());
        worst[2] = worst[2].max((su - s).abs());
        worst[3] = worst[3].max(sa - s);
        min_distinct = min_distinct.min(s);
        if !(s >= 0.0 && self_s.abs() <= 1e-9 && s > 1e-9 && (su - s).abs() <= 1e-9 && sa <= s + 1e-9) {
            fails += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        fails == 0 && secs < 30.0,
        format!(
            "1000 pairs, {fails} violations; min S={:.3e}, max S(ρ‖ρ)={:.1e}, max unitary drift={:.1e}, max partial-trace excess={:.1e}, {secs:.2}s",
            min_distinct, worst[1], worst[2], worst[3]
        ),
    )
}

fn ree_oracle_agreement() -> Outcome {
    let start = Instant::now();
    let mut rng = RngStream::new(7, 1);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let db = if k % 2 == 0 { 2 } else { 3 };
        let layout = Layout::from_dims(&[("A", 2), ("B", db)]).unwrap();
        let psi = haar_random_state(2 * db, &mut rng).unwrap().with_layout(layout.clone()).unwrap();
        let split = BipartiteSplit::new(&layout, &["A"]).unwrap();
        let (_, oracle) = pure_state_oracle(&psi, &split).unwrap();
        let report = closest_separable(&psi.projector(), &split, &SolverSettings::with_seed(k, 0)).unwrap();
        worst = worst.max((report.ree.value - oracle.value).abs());
    }

    let layout = Layout::qubit_pair("A", "B").unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let bell = StateVector::new(
        nalgebra::DVector::from_vec(vec![c(h), c(0.0), c(0.0), c(h)]),
        layout.clone(),
    )
    .unwrap();
    let split = BipartiteSplit::new(&layout, &["A"]).unwrap();
    let report = closest_separable(&bell.projector(), &split, &SolverSettings::default()).unwrap();
    let target = DensityOperator::diagonal(&[0.5, 0.0, 0.0, 0.5], layout).unwrap();
    let td = trace_distance(&report.closest_state, &target).unwrap();
    let secs = start.elapsed().as_secs_f64();
    (
        worst <= 2e-3 && td <= 2e-2 && secs < 300.0,
        format!("max |solver − oracle| = {worst:.2e} nats over 50 states; Bell σ* at trace distance {td:.2e} from ½(P00+P11); {secs:.1}s"),
    )
}

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn nearest_separable_claim() -> Outcome {
    let times = uniform_grid(5.0, 0.1).unwrap();
    let t = *times.last().unwrap();
    let mut worst_td: f64 = 0.0;
    let mut worst_excess = f64::NEG_INFINITY;
    for seed in 0..10 {
        let scenario = MeasurementScenario::equal_amplitudes(4, 32, 1.0, seed).unwrap();
        let cfg = EvolutionConfig::new(scenario, times.clone()).unwrap();
        let rng = cfg.dynamics_rng();
        let evo = Evolution::new(&cfg, &mut rng.substream(0)).unwrap();
        let rho = evo.state(t).unwrap();
        let pinch = rho.pinched(SYSTEM).unwrap();
        let split = system_split(rho.layout()).unwrap();
        let settings = SolverSettings {
            rng: rng.substream(1),
            ..SolverSettings::default()
        };
        let report = closest_separable(&rho, &split, &settings).unwrap();
        worst_td = worst_td.max(trace_distance(&report.closest_state, &pinch).unwrap());
        let to_pinch = quantum_relative_entropy(&rho, &pinch).unwrap().value;
        worst_excess = worst_excess.max(to_pinch - (report.ree.value + report.duality_gap));
    }
    (
        worst_td <= 0.05 && worst_excess <= 2e-3,
        format!("10 seeds at t={t}: max td(σ*, pinch) = {worst_td:.2e}, max S(ρ‖pinch) − (ree+gap) = {worst_excess:.2e}"),
    )
}

fn principle_2() -> Outcome {
    let start = Instant::now();
    let spec = shipped_sweep("principle2.toml");
    let outcomes = run_sweep(&spec).unwrap();
    let mut ratios = Vec::new();
    let mut cs = Vec::new();
    for &d_m in &spec.d_m {
        let rows = rows_for(&outcomes, d_m, spec.d_e[0]);
        let r: Vec<f64> = rows.iter().map(|r| r.ratio.unwrap_or(f64::NAN)).collect();
        let cc: Vec<f64> = rows.iter().map(|r| r.classical_corr.unwrap_or(f64::NAN)).collect();
        ratios.push(median(&r));
        cs.push(median(&cc));
    }
    let monotone = ratios.windows(2).all(|w| w[1] <= w[0]);
    let last_ok = *ratios.last().unwrap() <= 0.15;
    let c_ok = cs.iter().all(|&v| (0.5..=0.72).contains(&v));
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    (
        monotone && last_ok && c_ok,
        format!(
            "d_M {:?}: median ree/C [{}], median C [{}]; nonincreasing={monotone}, ≤0.15 at largest={last_ok}, C in [0.5,0.72]={c_ok}; {:.1}s",
            spec.d_m,
            fmt(&ratios),
            fmt(&cs),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn principle_1() -> Outcome {
    let spec = shipped_sweep("principle1.toml");
    let outcomes = run_sweep(&spec).unwrap();
    let d_m = spec.d_m[0];
    let mut medians = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &d_e in &spec.d_e {
        let taus: Vec<f64> = rows_for(&outcomes, d_m, d_e)
            .iter()
            .map(|r| r.tau.unwrap_or(f64::INFINITY))
            .collect();
        medians.push(median(&taus));
        for &tau in &taus {
            xs.push(d_e as f64);
            ys.push(tau);
        }
    }
    let strictly = medians.windows(2).all(|w| w[1] < w[0]);
    let rho = spearman(&xs, &ys);

    let mut frozen_spec = spec.clone();
    frozen_spec.coupling = vec![0.0];
    frozen_spec.d_e = vec![32];
    frozen_spec.seeds = 3;
    let frozen = run_sweep(&frozen_spec).unwrap();
    let mut max_dev: f64 = 0.0;
    let mut all_none = true;
    for o in &frozen {
        let rec = o.record.as_ref().unwrap();
        all_none &= rec.tau.is_none();
        for v in rec.coherence() {
            max_dev = max_dev.max((v - 1.0).abs());
        }
    }
    let frozen_ok = all_none && max_dev <= 1e-10;
    let med = medians.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>().join(", ");
    (
        strictly && rho < 0.0 && frozen_ok,
        format!(
            "d_M={d_m}, d_E {:?}: median τ [{med}], Spearman ρ = {rho:.3} over {} pairs; λ=0: τ none={all_none}, max |c−1| = {max_dev:.1e}",
            spec.d_e,
            xs.len()
        ),
    )
}

fn pointer_degeneration() -> Outcome {
    let d_m = 4;
    let n = 10_000;
    let mut halvings = Vec::new();
    let mut first_td = f64::NAN;
    let mut worst_td: f64 = 0.0;
    for seed in 0..20 {
        let base = RngStream::new(seed, 3);
        let spec = PointerSuperpositionSpec::random(d_m, &mut base.substream(0)).unwrap();
        let xi = build_pointer_superposition(&spec).unwrap();
        let target = pointer_mixture(&spec).unwrap();
        let at_n = dephase_pointer_superposition(&xi, n, &mut base.substream(1)).unwrap();
        let at_2n = dephase_pointer_superposition(&xi, 2 * n, &mut base.substream(2)).unwrap();
        let td_n = trace_distance(&at_n, &target).unwrap();
        let td_2n = trace_distance(&at_2n, &target).unwrap();
        if seed == 0 {
            first_td = td_n;
        }
        worst_td = worst_td.max(td_n);
        halvings.push(td_n / td_2n);
    }
    let bound = 9.0 / (n as f64).sqrt();
    let rate = median(&halvings);
    (
        worst_td <= bound && (1.2..=1.7).contains(&rate),
        format!(
            "d_M={d_m}, n={n}: td = {first_td:.2e} (seed 0), max over 20 seeds {worst_td:.2e} vs bound {bound:.2e}; median td(n)/td(2n) = {rate:.3}"
        ),
    )
}

fn epr() -> Outcome {
    let d_m = 3;
    let mut form_err: f64 = 0.0;
    let mut cc = Vec::new();
    let mut singlet_chsh = 0.0;
    let mut reduced_chsh: f64 = 0.0;
    for measured in [1, 2] {
        let s = build_epr_scenario(measured, d_m, &mut RngStream::new(11, 0)).unwrap();
        let da = 2 * d_m;
        let mut expected = DMatrix::<Complex64>::zeros(4 * da, 4 * da);
        for (pair, outcome) in [(1usize, 1usize), (2, 2)] {
            let m = default_pointer_state(d_m, outcome).unwrap();
            expected
                .view_mut((pair * da, pair * da), (da, da))
                .copy_from(&m.matrix().scale(0.5));
        }
        form_err = form_err.max((s.preselection.matrix() - &expected).iter().fold(0.0, |m, z| m.max(z.norm())));

        let split = s.split().unwrap();
        cc.push(classical_correlation(&s.preselection, &split, &SolverSettings::with_seed(11, measured as u64)).unwrap().value);
        singlet_chsh = chsh_max(&s.singlet).unwrap().value;
        let pair = s.preselection.partial_trace(&[PARTICLE_1, PARTICLE_2]).unwrap();
        reduced_chsh = reduced_chsh.max(chsh_max(&pair).unwrap().value);
    }
    let cc_diff = (cc[0] - cc[1]).abs();
    let tsirelson = 2.0 * std::f64::consts::SQRT_2;
    (
        form_err <= 1e-12 && cc_diff <= 2e-3 && (singlet_chsh - tsirelson).abs() <= 1e-9 && reduced_chsh <= 2.0 + 1e-9,
        format!(
            "form error {form_err:.1e}; C(particle 1) = {:.6}, C(particle 2) = {:.6}; singlet chsh_max = {singlet_chsh:.12}; reduced pair chsh_max = {reduced_chsh:.6}",
            cc[0], cc[1]
        ),
    )
}

fn run_cli(args: &[&str]) -> bool {
    let argv = std::iter::once("decoherence-lab").chain(args.iter().copied());
    Cli::try_parse_from(argv).is_ok_and(|cli| run(&cli).is_ok())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let sweep_cfg = dir.path().join("sweep.toml");
    std::fs::write(
        &sweep_cfg,
        "schema_version = 1\nmaster_seed = 5\nseeds = 2\nd_m = [2, 4]\nd_e = [8, 16]\ncoupling = [1.0]\nt_max = 2.0\ndt = 0.1\n",
    )
    .unwrap();
    let cfg = sweep_cfg.to_str().unwrap();
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let demo = dir.path().join(format!("demo-{run}"));
        let sweep = dir.path().join(format!("sweep-{run}"));
        if !run_cli(&["--seed", "3", "--out", demo.to_str().unwrap(), "demo"])
            || !run_cli(&["--config", cfg, "--out", sweep.to_str().unwrap(), "sweep"])
        {
            return (false, "CLI run failed".into());
        }
        files.push([
            std::fs::read(demo.join(decoherence_lab::TRAJECTORY_FILE)).unwrap(),
            std::fs::read(sweep.join(decoherence_lab::SWEEP_FILE)).unwrap(),
            std::fs::read(sweep.join(decoherence_lab::TRAJECTORIES_FILE)).unwrap(),
        ]);
    }
    let same: Vec<bool> = (0..3).map(|k| files[0][k] == files[1][k]).collect();
    (
        same.iter().all(|&s| s),
        format!(
            "identical reruns: {}={}, {}={}, {}={}",
            decoherence_lab::TRAJECTORY_FILE,
            same[0],
            decoherence_lab::SWEEP_FILE,
            same[1],
            decoherence_lab::TRAJECTORIES_FILE,
            same[2]
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("relative-entropy axioms", relative_entropy_axioms),
        ("REE oracle agreement", ree_oracle_agreement),
        ("nearest separable state is the pinch", nearest_separable_claim),
        ("principle 2: entanglement small against classical correlation", principle_2),
        ("principle 1: decoherence time falls with environment size", principle_1),
        ("pointer degeneration", pointer_degeneration),
        ("EPR scenario", epr),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let (ok, detail) = match std::panic::catch_unwind(check) {
            Ok(out) => out,
            Err(_) => (false, "panicked".to_string()),
        };
        if !ok {
            failed += 1;
        }
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
