//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line, even on success.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use msnlac::divergence::{divergence, DivergenceKind, JsMode};
use msnlac::eval::rfe;
use msnlac::grid::{BinaryMask, Field, Image};
use msnlac::levelset::{classic_ac_run, energy, evaluate, nlac_run, random_init, ClassicParams, NlacParams, XiPolicy};
use msnlac::multiscale::{msnlac_run, MsConfig};
use msnlac::similarity::{
    default_window_sigma, fit_field, make_window_with, patch_moments, KernelNorm, PairWeights, DEFAULT_CACHE_BUDGET,
};
use msnlac::speckle::{make_shapes, simulate, Phantom};
use msnlac::stats::{
    default_edges, estimate, moments, solve_weibull_shape, uniform_edges, weibull_cv2, DistParams, Model, Pmf,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, LogNormal, Weibull};

const SIZE: usize = 128;
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn phantom() -> Phantom<f64> {
    make_shapes(SIZE, SIZE, 3.0, 1.0, 3.0).unwrap()
}

fn ms_config(seed: u64) -> MsConfig<f64> {
    MsConfig {
        levels: 3,
        nlac: NlacParams {
            lambda: 20.0,
            xi: XiPolicy::Fixed(0.1),
            max_iters: 200,
            ..NlacParams::default()
        },
        model: Model::Gamma,
        tau: 2,
        nl_radius: 15,
        seed,
        ..MsConfig::default()
    }
}

struct SeedRun {
    ms: f64,
    ss: f64,
    ss_iters: usize,
}

fn run_seed(ph: &Phantom<f64>, seed: u64) -> SeedRun {
    let img = simulate(&ph.clean, 4.0, seed).unwrap();
    let cfg = ms_config(seed);
    let ms = msnlac_run(&img, &cfg, Some(&ph.gt_mask)).unwrap();
    let ms_rfe = rfe(&ms.mask, &ph.gt_mask).unwrap();

    let ss_iters = (ms.pixel_iterations() / (SIZE * SIZE)).max(1);
    let edges = default_edges(&img, cfg.bins).unwrap();
    let field = fit_field(&img, cfg.tau, cfg.model, &edges, cfg.looks).unwrap();
    let window = make_window_with(cfg.nl_radius, default_window_sigma(cfg.nl_radius), cfg.kernel_norm).unwrap();
    let phi0 = random_init(SIZE, SIZE, seed, cfg.nlac.epsilon).unwrap().phi;
    let params = NlacParams {
        max_iters: ss_iters,
        omega: 1e-300,
        ..cfg.nlac
    };
    let ss = nlac_run(&field, &window, &phi0, &params, None).unwrap();
    let ss_rfe = rfe(&ss.level_set.mask(params.polarity), &ph.gt_mask).unwrap();
    SeedRun {
        ms: ms_rfe,
        ss: ss_rfe,
        ss_iters,
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

fn coarse_to_fine(runs: &[SeedRun]) -> Outcome {
    let ms: Vec<f64> = runs.iter().map(|r| r.ms).collect();
    let wins = runs.iter().filter(|r| r.ms <= r.ss).count();
    let under = ms.iter().filter(|&&v| v <= 0.15).count();
    let med = median(&ms);
    outcome(
        med <= 0.15 && wins >= 4,
        format!("median MS RFE {med:.4} (<= 0.15 on {under}/5 seeds), MS <= SS on {wins}/5 seeds"),
    )
}

fn gradient_check() -> Outcome {
    let clean = Image::new(16, 16, (0..256).map(|i| if (i % 16) < 8 { 1.0 } else { 3.0 }).collect()).unwrap();
    let img = simulate(&clean, 4.0, 11).unwrap();
    let edges = default_edges(&img, 32).unwrap();
    let field = fit_field(&img, 1, Model::Gamma, &edges, 1).unwrap();
    let window = make_window_with(4, 2.0, KernelNorm::Density).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let phi = Field::from_fn(16, 16, |_, _| rng.random_range(-2.0..2.0));
    let (lambda, eps, step) = (2.0, 1.0, 1e-5);
    let mut worst: f64 = 0.0;
    for kind in DivergenceKind::ALL {
        let pairs = PairWeights::new(&field, &window, kind, JsMode::Standard, DEFAULT_CACHE_BUDGET);
        let (_, grad) = evaluate(&pairs, &phi, lambda, eps).unwrap();
        for _ in 0..20 {
            let (x, y) = (rng.random_range(0..16), rng.random_range(0..16));
            let mut plus = phi.clone();
            plus.set(x, y, phi.get(x, y) + step);
            let mut minus = phi.clone();
            minus.set(x, y, phi.get(x, y) - step);
            let e = |p: &Field<f64>| energy(&pairs, p, lambda, eps).unwrap().total;
            let fd = (e(&plus) - e(&minus)) / (2.0 * step);
            worst = worst.max((grad.get(x, y) - fd).abs() / fd.abs().max(1e-12));
        }
    }
    outcome(worst < 1e-3, format!("worst relative error {worst:.2e} over 5 distances x 20 pixels"))
}

fn random_pmf(rng: &mut ChaCha8Rng, edges: &std::sync::Arc<Vec<f64>>) -> Pmf<f64> {
    let raw: Vec<f64> = (0..64).map(|_| rng.random_range(1e-3..1.0)).collect();
    let total: f64 = raw.iter().sum();
    Pmf::new(edges.clone(), raw.iter().map(|v| v / total).collect()).unwrap()
}

fn divergence_suite() -> Outcome {
    let edges = uniform_edges(0.0, 16.0, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let tol = 1e-9;
    let mut failures = Vec::new();
    for _ in 0..1000 {
        let p = random_pmf(&mut rng, &edges);
        let q = random_pmf(&mut rng, &edges);
        for kind in DivergenceKind::ALL {
            let d = |a: &Pmf<f64>, b: &Pmf<f64>| divergence(kind, a, b, JsMode::Standard).unwrap();
            let (pq, qp) = (d(&p, &q), d(&q, &p));
            if (pq - qp).abs() > tol {
                failures.push(format!("{kind} symmetry"));
            }
            if pq < -tol {
                failures.push(format!("{kind} negative"));
            }
            if d(&p, &p).abs() > tol || pq <= tol {
                failures.push(format!("{kind} identity"));
            }
            let bound = match kind {
                DivergenceKind::Tv | DivergenceKind::Hellinger => Some(1.0),
                DivergenceKind::Js => Some(std::f64::consts::LN_2),
                _ => None,
            };
            if bound.is_some_and(|b| pq > b + tol) {
                failures.push(format!("{kind} bound"));
            }
        }
        let std = divergence(DivergenceKind::Js, &p, &q, JsMode::Standard).unwrap();
        let verb = divergence(DivergenceKind::Js, &p, &q, JsMode::Verbatim).unwrap();
        if (verb - (2.0 * std - 2.0 * std::f64::consts::LN_2)).abs() > tol {
            failures.push("js verbatim relation".into());
        }
    }
    failures.dedup();
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "1000 random pairs, all properties hold".to_string()
        } else {
            failures.join(", ")
        },
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn estimator_round_trips() -> Outcome {
    const N: usize = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut errs: Vec<(String, f64, f64)> = Vec::new();

    let ln = LogNormal::new(0.5, 0.4).unwrap();
    let s: Vec<f64> = (0..N).map(|_| ln.sample(&mut rng)).collect();
    if let DistParams::LogNormal { mu, sigma } = estimate(Model::LogNormal, &moments(&s).unwrap(), 1).unwrap().params {
        errs.push(("lognormal".into(), rel(mu, 0.5).max(rel(sigma, 0.4)), 0.05));
    }

    let s: Vec<f64> = (0..N)
        .map(|_| {
            let e: f64 = Exp1.sample(&mut rng);
            1.5 * (2.0 * e).sqrt()
        })
        .collect();
    if let DistParams::Rayleigh { sigma } = estimate(Model::Rayleigh, &moments(&s).unwrap(), 1).unwrap().params {
        errs.push(("rayleigh".into(), rel(sigma, 1.5), 0.05));
    }

    let g = Gamma::new(4.0, 0.5).unwrap();
    let s: Vec<f64> = (0..N).map(|_| g.sample(&mut rng)).collect();
    if let DistParams::Gamma { alpha, beta } = estimate(Model::Gamma, &moments(&s).unwrap(), 1).unwrap().params {
        errs.push(("gamma".into(), rel(alpha, 4.0).max(rel(beta, 2.0)), 0.05));
    }

    let w = Weibull::new(2.0, 1.7).unwrap();
    let s: Vec<f64> = (0..N).map(|_| w.sample(&mut rng)).collect();
    if let DistParams::Weibull { beta, eta } = estimate(Model::Weibull, &moments(&s).unwrap(), 1).unwrap().params {
        errs.push(("weibull".into(), rel(beta, 1.7).max(rel(eta, 2.0)), 0.05));
    }

    // amplitude G_A^0 with one look: sqrt of unit-mean gamma speckle times
    // a reciprocal-gamma backscatter
    let (alpha, gamma) = (-4.0, 3.0);
    let speckle = Gamma::new(1.0, 1.0).unwrap();
    let texture = Gamma::new(-alpha, 1.0).unwrap();
    let s: Vec<f64> = (0..N)
        .map(|_| {
            let x: f64 = speckle.sample(&mut rng);
            let y = gamma / texture.sample(&mut rng);
            (x * y).sqrt()
        })
        .collect();
    if let DistParams::Ga0 { alpha: a, gamma: gm, .. } = estimate(Model::Ga0, &moments(&s).unwrap(), 1).unwrap().params {
        errs.push(("ga0".into(), rel(a, alpha).max(rel(gm, gamma)), 0.10));
    }

    let mut worst_inv: f64 = 0.0;
    for i in 0..=200 {
        let beta = 0.2 * (100.0f64).powf(i as f64 / 200.0);
        let s = solve_weibull_shape(weibull_cv2(beta)).unwrap();
        worst_inv = worst_inv.max((s.beta - beta).abs() / beta);
    }
    let spot = solve_weibull_shape(4.0 / std::f64::consts::PI - 1.0).unwrap().beta;

    let fits = errs.len() == 5 && errs.iter().all(|(_, e, tol)| e <= tol);
    let pass = fits && worst_inv <= 1e-8 && (spot - 2.0).abs() <= 1e-6;
    let table: Vec<String> = errs.iter().map(|(m, e, _)| format!("{m} {:.1}%", 100.0 * e)).collect();
    outcome(
        pass,
        format!(
            "{}; weibull inversion {worst_inv:.1e}; cv2=4/pi-1 -> beta {spot:.9}",
            table.join(", ")
        ),
    )
}

fn random_mask(rng: &mut ChaCha8Rng, density: f64) -> BinaryMask {
    Field::from_fn(16, 16, |_, _| rng.random_bool(density))
}

fn rfe_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut mismatches = 0;
    let mut trials = 0;
    while trials < 1000 {
        let (dm, dg) = (rng.random_range(0.0..1.0), rng.random_range(0.05..1.0));
        let mask = random_mask(&mut rng, dm);
        let gt = random_mask(&mut rng, dg);
        let (mut union, mut inter, mut g) = (0usize, 0usize, 0usize);
        for (&m, &t) in mask.as_slice().iter().zip(gt.as_slice()) {
            union += usize::from(m || t);
            inter += usize::from(m && t);
            g += usize::from(t);
        }
        if g == 0 {
            continue;
        }
        trials += 1;
        if rfe(&mask, &gt).unwrap() != (union - inter) as f64 / g as f64 {
            mismatches += 1;
        }
    }
    let gt = random_mask(&mut rng, 0.4);
    let empty = Field::filled(16, 16, false);
    let bounds = rfe(&gt, &gt).unwrap() == 0.0 && rfe(&empty, &gt).unwrap() == 1.0;
    outcome(
        mismatches == 0 && bounds,
        format!("{mismatches} mismatches in 1000 pairs; RFE(G,G)=0 and RFE(empty,G)=1: {bounds}"),
    )
}

fn sliding_moments() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut worst: f64 = 0.0;
    for tau in 1..=3usize {
        let img: Image<f64> = Image::new(16, 16, (0..256).map(|_| rng.random_range(0.1..10.0)).collect()).unwrap();
        let fast = patch_moments(&img, tau).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let t = tau as isize;
                let mut patch = Vec::new();
                for dy in -t..=t {
                    for dx in -t..=t {
                        patch.push(img.field().get_mirrored(x as isize + dx, y as isize + dy));
                    }
                }
                let direct = moments(&patch).unwrap();
                let m = fast.get(x, y);
                worst = worst
                    .max((m.mean - direct.mean).abs())
                    .max((m.var - direct.var).abs())
                    .max((m.m_half - direct.m_half).abs());
            }
        }
    }
    outcome(worst <= 1e-10, format!("worst moment difference {worst:.1e} (tau 1..3)"))
}

fn baseline_tradeoff(ph: &Phantom<f64>, ms_rfe: f64) -> Outcome {
    let seed = SEEDS[0];
    let img = simulate(&ph.clean, 4.0, seed).unwrap();
    let phi0 = random_init(SIZE, SIZE, seed, 1.0).unwrap().phi;
    let mut rows = Vec::new();
    let mut best = f64::INFINITY;
    for lambda in [0.4, 0.3, 0.2, 0.1] {
        let params = ClassicParams {
            lambda,
            ..ClassicParams::default()
        };
        let res = classic_ac_run(&img, &phi0, &params, None).unwrap();
        let e = rfe(&res.level_set.mask(params.polarity), &ph.gt_mask).unwrap();
        best = best.min(e);
        rows.push(format!("lambda {lambda}: {e:.4}"));
    }
    let margin = (best - ms_rfe) / best;
    outcome(
        margin >= 0.10,
        format!("MS-NLAC {ms_rfe:.4} vs classic [{}], margin {:.0}%", rows.join(", "), 100.0 * margin),
    )
}

fn msnlac(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_msnlac"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn replay_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let sim = msnlac(&["simulate", "--size", "64", "--seed", "7", "--out", "sim"], dir);
    if !sim.status.success() {
        return outcome(false, format!("simulate failed: {}", String::from_utf8_lossy(&sim.stderr)));
    }
    let first = msnlac(
        &[
            "segment", "sim/speckled.pgm", "--gt", "sim/gt.pgm", "--out", "a", "--scales", "2", "--patch-half", "1",
            "--nl-radius", "4", "--lambda", "5", "--xi", "0.1", "--max-iters", "25", "--seed", "7", "--threads", "1",
        ],
        dir,
    );
    if !first.status.success() {
        return outcome(false, format!("segment failed: {}", String::from_utf8_lossy(&first.stderr)));
    }
    let second = msnlac(&["segment", "--replay", "a/run.json", "--out", "b"], dir);
    if !second.status.success() {
        return outcome(false, format!("replay failed: {}", String::from_utf8_lossy(&second.stderr)));
    }
    let a = std::fs::read(dir.join("a/mask.pgm")).unwrap();
    let b = std::fs::read(dir.join("b/mask.pgm")).unwrap();
    outcome(a == b, format!("mask.pgm {} bytes, identical: {}", a.len(), a == b))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut timed = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t0 = Instant::now();
        let o = f();
        let secs = t0.elapsed().as_secs_f64();
        println!(
            "acceptance {n} {name}: {} ({}; {secs:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, name, o, secs));
    };

    let ph = phantom();
    let mut runs = Vec::new();
    timed(1, "coarse-to-fine superiority", &mut || {
        runs = SEEDS.iter().map(|&s| run_seed(&ph, s)).collect();
        for (s, r) in SEEDS.iter().zip(&runs) {
            println!("  seed {s}: MS {:.4}  SS {:.4} ({} iterations)", r.ms, r.ss, r.ss_iters);
        }
        coarse_to_fine(&runs)
    });
    timed(2, "gradient check", &mut gradient_check);
    timed(3, "divergence properties", &mut divergence_suite);
    timed(4, "estimator round trips", &mut estimator_round_trips);
    timed(5, "rfe oracle", &mut rfe_oracle);
    timed(6, "sliding moments", &mut sliding_moments);
    let ms_seed1 = runs.first().map_or(f64::NAN, |r| r.ms);
    timed(7, "baseline trade-off", &mut || baseline_tradeoff(&ph, ms_seed1));
    timed(8, "replay determinism", &mut replay_determinism);

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    let total: f64 = results.iter().map(|r| r.3).sum();
    println!("acceptance summary: {}/8 passed in {total:.0}s", 8 - failed.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
