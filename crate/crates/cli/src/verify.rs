use anyhow::Result;
use clap::{Args, ValueEnum};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use set_twister::autodiff::{gradient_check, Activation, Tensor};
use set_twister::graph::{Graph, NodeModel};
use set_twister::setrep::{
    naive_expand, pool_bank, twist_combine, Architecture, CoefficientMode, Pooling, RhoSpec, SetBatch, SetModel,
    SetModelParams, SetTwisterConfig, DEFAULT_ORACLE_BOUND,
};
use set_twister::tasks::Split;

use crate::count::{print_breakdown, CountArgs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Invariance,
    Oracle,
    Gradients,
    Counts,
    All,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(value_enum, default_value = "all")]
    pub suite: Suite,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// With `counts`: also print breakdowns for this model shape.
    #[command(flatten)]
    pub count: CountArgs,
    /// Test fixture: perturb the coefficient table on the pooled path only.
    #[arg(long, hide = true)]
    pub corrupt_alpha: bool,
}

pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub max_error: f64,
    pub tol: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tol
    }
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn small_config(rng: &mut ChaCha8Rng, m: usize, k: usize, d_in: usize, d_rep: usize) -> SetTwisterConfig {
    let pooling = if rng.random_bool(0.5) { Pooling::Sum } else { Pooling::Mean };
    SetTwisterConfig::new(m, k, d_in, d_rep)
        .with_phi_hidden(vec![rng.random_range(2..6)])
        .with_pooling(pooling)
        .with_rho(RhoSpec::Mlp {
            hidden: vec![rng.random_range(2..6)],
            out: 2,
            activation: Activation::Tanh,
            bias: true,
        })
}

/// Relative error that stays meaningful when both sides are near zero.
fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn oracle(seed: u64, corrupt_alpha: bool) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error = 0.0f64;
    let mut cases = 0;
    for m in 1..=3 {
        for k in 1..=m.min(3) {
            for n_h in 1..=4 {
                for d_rep in 1..=4 {
                    for _ in 0..20 {
                        let config = small_config(&mut rng, m, k, 2, d_rep).with_rho(RhoSpec::None);
                        let mut params = SetModelParams::init(Architecture::SetTwister, &config, d_rep, &mut rng)?;
                        for e in &mut params.alpha.as_mut().expect("set twister").entries {
                            e.value.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-2.0..2.0));
                        }
                        let h = random_rows(&mut rng, n_h, config.d_in);
                        let want = naive_expand(&config, &params, &h, DEFAULT_ORACLE_BOUND)?;
                        let mut alpha = params.alpha.clone().expect("set twister");
                        if corrupt_alpha {
                            alpha.entries[0].value.data_mut()[0] += 0.5;
                        }
                        let got = twist_combine(&pool_bank(&config, &params, &h)?, &alpha, k)?;
                        for (a, b) in got.iter().zip(&want) {
                            max_error = max_error.max(rel(*a, *b));
                        }
                        cases += 1;
                    }
                }
            }
        }
    }
    Ok(SuiteReport {
        name: "oracle",
        cases,
        max_error,
        tol: 1e-10,
    })
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Result<Graph> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if v == u + 1 || rng.random_bool(0.3) {
                edges.push((u, v));
            }
        }
    }
    let x = Tensor::from_rows(&random_rows(rng, n, d))?;
    Ok(Graph::new(n, &edges, x, vec![0; n], vec![Some(Split::Train); n])?)
}

/// The same graph with node `v` renamed `perm[v]`.
fn relabel(g: &Graph, perm: &[usize]) -> Result<Graph> {
    let n = g.num_nodes();
    let edges: Vec<(usize, usize)> = g.edges().into_iter().map(|(u, v)| (perm[u], perm[v])).collect();
    let mut rows = vec![Vec::new(); n];
    for v in 0..n {
        rows[perm[v]] = g.features.row(v).to_vec();
    }
    let x = Tensor::from_rows(&rows)?;
    Ok(Graph::new(n, &edges, x, vec![0; n], vec![Some(Split::Train); n])?)
}

pub fn invariance(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error = 0.0f64;
    let mut cases = 0;
    for trial in 0..50 {
        let arch = if trial % 2 == 0 { Architecture::SetTwister } else { Architecture::DeepSets };
        let (m, k) = match arch {
            Architecture::DeepSets => (1, 1),
            Architecture::SetTwister => {
                let m = rng.random_range(1..=3);
                (m, rng.random_range(1..=m))
            }
        };
        let config = small_config(&mut rng, m, k, 3, 3);
        let model = SetModel::init(arch, config.clone(), &mut rng)?;
        let n_h = rng.random_range(1..8);
        let h = random_rows(&mut rng, n_h, 3);
        let base = model.predict(&SetBatch::single(&h, config.pooling)?)?;
        for _ in 0..100 {
            let mut hp = h.clone();
            hp.shuffle(&mut rng);
            let out = model.predict(&SetBatch::single(&hp, config.pooling)?)?;
            for (a, b) in out.data().iter().zip(base.data()) {
                max_error = max_error.max((a - b).abs());
            }
            cases += 1;
        }

        let graph = random_graph(&mut rng, 8, 3)?;
        let node = NodeModel::init(arch, config, &mut rng)?;
        let reps: Vec<Vec<f64>> = (0..8).map(|v| node.node_rep(&graph, v)).collect::<set_twister::Result<_>>()?;
        for _ in 0..10 {
            let mut perm: Vec<usize> = (0..8).collect();
            perm.shuffle(&mut rng);
            let moved = relabel(&graph, &perm)?;
            for (v, rep) in reps.iter().enumerate() {
                let out = node.node_rep(&moved, perm[v])?;
                for (a, b) in out.iter().zip(rep) {
                    max_error = max_error.max((a - b).abs());
                }
            }
            cases += 1;
        }
    }
    Ok(SuiteReport {
        name: "invariance",
        cases,
        max_error,
        tol: 1e-9,
    })
}

pub fn gradients(seed: u64) -> Result<SuiteReport> {
    let mut max_error = 0.0f64;
    let mut cases = 0;
    for (m, k) in [(1, 1), (2, 2), (3, 2), (3, 3)] {
        for s in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (s * 1000 + m as u64 * 10 + k as u64));
            let config = small_config(&mut rng, m, k, 3, 2);
            let model = SetModel::init(Architecture::SetTwister, config.clone(), &mut rng)?;
            let groups: Vec<Vec<usize>> = vec![vec![0, 1, 2], vec![3, 4], vec![5, 1, 1, 0]];
            let rows = Tensor::from_rows(&random_rows(&mut rng, 6, 3))?;
            let batch = SetBatch::new(rows, &groups, config.pooling)?;
            let weights: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let flat: Vec<Tensor> = model.params.iter().cloned().collect();
            let report = gradient_check(
                |g, vars| {
                    let mut it = vars.iter().copied();
                    let bound = model.params.map(&mut |_| it.next().expect("one var per tensor"));
                    let out = model.forward_var(g, &bound, &batch)?;
                    let w = g.constant(Tensor::matrix(3, 2, weights.clone())?);
                    let prod = g.hadamard(out, w)?;
                    g.sum(prod)
                },
                &flat,
                1e-5,
                1e-4,
            )?;
            max_error = max_error.max(report.max_rel_error);
            cases += 1;
        }
    }
    Ok(SuiteReport {
        name: "gradients",
        cases,
        max_error,
        tol: 1e-4,
    })
}

/// Closed-form counts against an enumeration of initialized parameters,
/// plus the reference shapes with known totals.
pub fn counts(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0usize;
    let mut cases = 0;
    for _ in 0..50 {
        let m = rng.random_range(1..=4);
        let k = rng.random_range(1..=m);
        let arch = if rng.random_bool(0.3) { Architecture::DeepSets } else { Architecture::SetTwister };
        let (m, k) = if arch == Architecture::DeepSets { (1, 1) } else { (m, k) };
        let (d_in, d_rep) = (rng.random_range(1..6), rng.random_range(1..6));
        let mut config = small_config(&mut rng, m, k, d_in, d_rep);
        if m >= 2 && k == 2 && rng.random_bool(0.5) {
            config = config.with_coefficient_mode(CoefficientMode::Full);
        }
        if rng.random_bool(0.5) {
            config = config.without_phi_bias();
        }
        let counted = set_twister::setrep::param_count(arch, &config)?;
        let params = SetModelParams::init(arch, &config, config.d_rep, &mut rng)?;
        let rho_scalars: usize = params.rho.iter().flat_map(|r| r.iter()).map(Tensor::numel).sum();
        if counted.with_rho != params.scalar_count() as u128
            || counted.with_rho - counted.without_rho != rho_scalars as u128
        {
            mismatches += 1;
        }
        cases += 1;
    }
    for (arch, want) in crate::count::reference_totals() {
        let (p, f) = want;
        let (shape, n_h) = crate::count::reference_config(arch);
        let pc = set_twister::setrep::param_count(arch, &shape)?;
        let fc = set_twister::setrep::flop_count(arch, &shape, n_h)?;
        if (pc.without_rho, pc.with_rho, fc.without_rho, fc.with_rho) != (p.0, p.1, f.0, f.1) {
            mismatches += 1;
        }
        cases += 1;
    }
    Ok(SuiteReport {
        name: "counts",
        cases,
        max_error: mismatches as f64,
        tol: 0.0,
    })
}

/// Runs the requested suites, printing one line per suite. Returns whether
/// every suite passed.
pub fn run(args: &VerifyArgs) -> Result<bool> {
    let suites: &[Suite] = match args.suite {
        Suite::All => &[Suite::Invariance, Suite::Oracle, Suite::Gradients, Suite::Counts],
        ref one => std::slice::from_ref(one),
    };
    let mut ok = true;
    for suite in suites {
        let started = std::time::Instant::now();
        let report = match suite {
            Suite::Invariance => invariance(args.seed)?,
            Suite::Oracle => oracle(args.seed, args.corrupt_alpha)?,
            Suite::Gradients => gradients(args.seed)?,
            Suite::Counts => counts(args.seed)?,
            Suite::All => unreachable!(),
        };
        let verdict = if report.passed() { "PASS" } else { "FAIL" };
        let secs = started.elapsed().as_secs_f64();
        if *suite == Suite::Counts {
            println!("{verdict} {}: {} cases, {} mismatches, {secs:.2}s", report.name, report.cases, report.max_error);
        } else {
            println!(
                "{verdict} {}: {} cases, max error {:.3e} (tolerance {:.0e}), {secs:.2}s",
                report.name, report.cases, report.max_error, report.tol
            );
        }
        ok &= report.passed();
        if *suite == Suite::Counts && (args.count.m.is_some() || args.count.k.is_some()) {
            print_breakdown(&args.count)?;
        }
    }
    Ok(ok)
}
