//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines always reach the
//! terminal. Pass substrings as arguments to run only matching criteria,
//! e.g. `cargo test --test acceptance -- fig9b`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use chanest_core::channel::{angular_dictionary, sensing_matrix, MimoPilotConfig};
use chanest_core::classical::{lmmse_estimate, omp};
use chanest_core::harness::ResultTable;
use chanest_core::linalg::{kron, least_squares, matmul};
use chanest_core::nn::gradient_suite;
use chanest_core::random::{choose_sorted, complex_gaussian, complex_gaussian_matrix, noise_variance, rng_for};
use chanest_core::{ComplexMatrix, C64};
use rand::Rng;

/// Criteria that are implemented faithfully but not met at the smoke
/// profile. They still print FAIL; they do not fail the target.
const KNOWN_GAPS: &[&str] = &[];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------------------
// Dense reference arithmetic, independent of the library's kernels

type Dense = Vec<Vec<C64>>;

fn dense(m: &ComplexMatrix) -> Dense {
    (0..m.rows()).map(|r| (0..m.cols()).map(|c| m[(r, c)]).collect()).collect()
}

fn dmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n).map(|i| (0..m).map(|j| (0..k).map(|t| a[i][t] * b[t][j]).sum()).collect()).collect()
}

fn dherm(a: &Dense) -> Dense {
    (0..a[0].len()).map(|j| (0..a.len()).map(|i| a[i][j].conj()).collect()).collect()
}

/// Gauss-Jordan inverse with partial pivoting.
fn dinv(a: &Dense) -> Dense {
    let n = a.len();
    let mut m: Dense = a
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().copied().chain((0..n).map(|j| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0))).collect())
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].norm().total_cmp(&m[y][col].norm())).unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                let pivot_row = m[col].clone();
                for (v, pv) in m[r].iter_mut().zip(pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    m.into_iter().map(|row| row[n..].to_vec()).collect()
}

fn dist(a: &Dense, b: &ComplexMatrix) -> f64 {
    let mut s = 0.0;
    for (r, row) in a.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            s += (v - b[(r, c)]).norm_sqr();
        }
    }
    s.sqrt()
}

fn psd<R: Rng>(rng: &mut R, n: usize) -> (ComplexMatrix, ComplexMatrix) {
    let a = complex_gaussian_matrix(rng, n, n, 1.0 / n as f64);
    let r = matmul(&a, &a.hermitian()).unwrap().add_diagonal(1e-3).unwrap();
    (a, r)
}

// ---------------------------------------------------------------------------
// Estimator and engine checks

fn lmmse_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let mut rng = rng_for(1000 + i, 0);
        let x = complex_gaussian_matrix(&mut rng, 4, 4, 1.0);
        let y = complex_gaussian_matrix(&mut rng, 4, 1, 1.0);
        let (_, r) = psd(&mut rng, 4);
        let s2 = rng.random_range(0.01..2.0);
        let got = lmmse_estimate(&y, &x, &r, s2).unwrap();
        let (xd, rd) = (dense(&x), dense(&r));
        let rxh = dmul(&rd, &dherm(&xd));
        let mut inner = dmul(&xd, &rxh);
        for (k, row) in inner.iter_mut().enumerate() {
            row[k] += s2;
        }
        let want = dmul(&dmul(&rxh, &dinv(&inner)), &dense(&y));
        let norm = want.iter().map(|r| r[0].norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(dist(&want, &got) / norm);
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(worst < 1e-10 && secs < 1.0, format!("max relative error {worst:.2e} (< 1e-10), {secs:.2} s (< 1 s)"))
}

fn lmmse_risk() -> Outcome {
    let instances = 500;
    let draws = 100;
    let mut violations = 0;
    for i in 0..instances {
        let mut rng = rng_for(2000 + i, 0);
        let x = complex_gaussian_matrix(&mut rng, 8, 4, 1.0);
        let (a, r) = psd(&mut rng, 4);
        let snr = rng.random_range(0.0..20.0);
        let power = matmul(&matmul(&x, &r).unwrap(), &x.hermitian()).unwrap().trace().re / 8.0;
        let s2 = noise_variance(power, snr);
        let (mut risk_ls, mut risk_lmmse) = (0.0, 0.0);
        for _ in 0..draws {
            let h = matmul(&a, &complex_gaussian_matrix(&mut rng, 4, 1, 1.0)).unwrap();
            let n = complex_gaussian_matrix(&mut rng, 8, 1, s2);
            let y = matmul(&x, &h).unwrap().add(&n).unwrap();
            risk_ls += least_squares(&x, &y).unwrap().sub(&h).unwrap().frobenius_norm_sqr();
            risk_lmmse += lmmse_estimate(&y, &x, &r, s2).unwrap().sub(&h).unwrap().frobenius_norm_sqr();
        }
        if risk_lmmse > risk_ls {
            violations += 1;
        }
    }
    let frac = violations as f64 / instances as f64;
    outcome(frac < 0.01, format!("LMMSE risk above LS on {violations}/{instances} instances ({:.1}% < 1%), {draws} paired draws each", 100.0 * frac))
}

fn omp_brute_force() -> Outcome {
    let t0 = Instant::now();
    let (rows, grid, cases) = (32, 64, 200);
    let mut agree = 0;
    for i in 0..cases {
        let mut rng = rng_for(3000 + i, 0);
        let mut phi = complex_gaussian_matrix(&mut rng, rows, grid, 1.0);
        for c in 0..grid {
            let n = phi.column(c).frobenius_norm();
            for r in 0..rows {
                phi[(r, c)] /= n;
            }
        }
        let k = rng.random_range(1..=2);
        let support = choose_sorted(&mut rng, grid, k);
        let gains = ComplexMatrix::from_fn(k, 1, |_, _| complex_gaussian(&mut rng, 1.0));
        let clean = matmul(&phi.select_columns(&support).unwrap(), &gains).unwrap();
        let snr = rng.random_range(30.0..40.0);
        let s2 = noise_variance(clean.frobenius_norm_sqr() / rows as f64, snr);
        let y = clean.add(&complex_gaussian_matrix(&mut rng, rows, 1, s2)).unwrap();

        let mut best = (f64::INFINITY, Vec::new());
        let candidates: Vec<Vec<usize>> = if k == 1 {
            (0..grid).map(|a| vec![a]).collect()
        } else {
            (0..grid).flat_map(|a| (a + 1..grid).map(move |b| vec![a, b])).collect()
        };
        for s in candidates {
            let sub = phi.select_columns(&s).unwrap();
            let g = least_squares(&sub, &y).unwrap();
            let res = y.sub(&matmul(&sub, &g).unwrap()).unwrap().frobenius_norm_sqr();
            if res < best.0 {
                best = (res, s);
            }
        }
        let mut found = omp(&y, &phi, k, 0.0).unwrap().support;
        found.sort_unstable();
        if found == best.1 {
            agree += 1;
        }
    }
    let frac = agree as f64 / cases as f64;
    let secs = t0.elapsed().as_secs_f64();
    outcome(frac >= 0.95 && secs < 30.0, format!("support agreement {agree}/{cases} ({:.1}% ≥ 95%), {secs:.1} s (< 30 s)", 100.0 * frac))
}

fn kronecker_sensing() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let mut rng = rng_for(4000 + i, 0);
        let (p, q, r, s) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..6));
        let a = complex_gaussian_matrix(&mut rng, p, q, 1.0);
        let x = complex_gaussian_matrix(&mut rng, q, r, 1.0);
        let b = complex_gaussian_matrix(&mut rng, r, s, 1.0);
        let lhs = matmul(&matmul(&a, &x).unwrap(), &b).unwrap().vec();
        let rhs = dmul(&dense(&kron(&b.transpose(), &a)), &dense(&x.vec()));
        worst = worst.max(dist(&rhs, &lhs));

        let (n_r, n_t) = (rng.random_range(2..6), rng.random_range(2..9));
        let (g_r, g_t) = (rng.random_range(n_r..2 * n_r + 1), rng.random_range(n_t..2 * n_t + 1));
        let (m, n) = (rng.random_range(1..n_t + 1), rng.random_range(1..n_r + 1));
        let cfg = MimoPilotConfig::random_phase(&mut rng, n_r, n_t, m, n, 1.0, vec![0]);
        let (a_r, a_t) = (angular_dictionary(n_r, g_r), angular_dictionary(n_t, g_t));
        let mut g = ComplexMatrix::zeros(g_r, g_t);
        for _ in 0..3 {
            let (u, v) = (rng.random_range(0..g_r), rng.random_range(0..g_t));
            g[(u, v)] = complex_gaussian(&mut rng, 1.0);
        }
        // Y = W^H A_R G A_T^H F S
        let y = dmul(&dmul(&dmul(&dmul(&dmul(&dherm(&dense(&cfg.w)), &dense(&a_r)), &dense(&g)), &dherm(&dense(&a_t))), &dense(&cfg.f)), &dense(&cfg.s));
        let vec_y: Dense = (0..m).flat_map(|c| y.iter().map(move |row| vec![row[c]])).collect();
        let phi_g = matmul(&sensing_matrix(&cfg, &a_t, &a_r).unwrap(), &g.vec()).unwrap();
        worst = worst.max(dist(&vec_y, &phi_g));
    }
    outcome(worst <= 1e-10, format!("max |vec(AXB) - (Bᵀ⊗A)vec(X)|, |vec(Y) - Φg| = {worst:.2e} (≤ 1e-10) over 100 configurations"))
}

fn gradients() -> Outcome {
    let t0 = Instant::now();
    let checks = gradient_suite(5, 11).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let (name, worst) = checks.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let names: BTreeSet<&str> = checks.iter().map(|c| c.0.as_str()).collect();
    outcome(
        *worst < 1e-5 && secs < 60.0,
        format!("{} checks over {} kinds, worst {worst:.2e} ({name}) (< 1e-5), {secs:.1} s (< 60 s)", checks.len(), names.len()),
    )
}

// ---------------------------------------------------------------------------
// Figure trends, run through the CLI at the smoke profile

fn reproduce(figure: &str, seed: u64, out: &Path) -> (ResultTable, PathBuf, f64) {
    let t0 = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_chanest"))
        .args(["reproduce", figure, "--profile", "smoke", "--seed", &seed.to_string(), "--out"])
        .arg(out)
        .env_remove("CHANEST_OUT")
        .status()
        .expect("chanest runs");
    assert!(status.success(), "chanest reproduce {figure} failed");
    let path = out.join(format!("{figure}.csv"));
    (ResultTable::read_csv(&path).unwrap(), path, t0.elapsed().as_secs_f64())
}

fn seeds_of(t: &ResultTable) -> usize {
    t.rows().iter().map(|r| r.seed).collect::<BTreeSet<_>>().len()
}

fn mean(t: &ResultTable, method: &str, snr: f64, metric: &str) -> f64 {
    t.mean(method, snr, metric).unwrap_or_else(|| panic!("no rows for {method} at {snr} dB"))
}

fn fig6b(t: &ResultTable, secs: f64) -> Outcome {
    let m = |name| mean(t, name, 20.0, "mse");
    let (dl, omp, oracle) = (m("dl"), m("omp"), m("oracle"));
    let wins = t.series("dl", 20.0, "mse").iter().zip(t.series("omp", 20.0, "mse")).filter(|(a, b)| a.1 <= b.1).count();
    let n = seeds_of(t);
    outcome(
        n >= 3 && dl <= omp && dl >= oracle && omp >= oracle && secs < 600.0,
        format!("20 dB over {n} seeds: DL {dl:.3e} ≤ OMP {omp:.3e} (DL ahead on {wins}/{n}), both ≥ oracle {oracle:.3e}; {secs:.0} s (< 600 s)"),
    )
}

fn fig5(t: &ResultTable) -> Outcome {
    let n = seeds_of(t);
    let mut snrs: Vec<f64> = t.rows().iter().map(|r| r.snr_db).collect();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();
    let mid = [snrs[snrs.len() / 2 - 1], snrs[snrs.len() / 2]];
    let s = |arm, snr| mean(t, arm, snr, "success");
    let all_ok = snrs.iter().all(|&x| s("fcn_all", x) >= s("fcn", x));
    let mid_ok = mid.iter().all(|&x| s("fcn_bn", x) >= s("fcn", x) && s("fcn_dropout", x) >= s("fcn", x));
    let curve = |arm| snrs.iter().map(|&x| format!("{:.3}", s(arm, x))).collect::<Vec<_>>().join(" ");
    outcome(
        n >= 5 && all_ok && mid_ok,
        format!(
            "{n} seeds; success at {snrs:?} dB: plain [{}], all [{}]; at mid SNR {mid:?}: bn [{}], dropout [{}]",
            curve("fcn"),
            curve("fcn_all"),
            mid.iter().map(|&x| format!("{:.3}", s("fcn_bn", x))).collect::<Vec<_>>().join(" "),
            mid.iter().map(|&x| format!("{:.3}", s("fcn_dropout", x))).collect::<Vec<_>>().join(" "),
        ),
    )
}

fn fig7b(t: &ResultTable) -> Outcome {
    let m = |name| mean(t, name, 10.0, "nmse");
    let (lstm, ls, lmmse) = (m("lstm"), m("ls"), m("lmmse"));
    let wins = t.series("lstm", 10.0, "nmse").iter().zip(t.series("lmmse", 10.0, "nmse")).filter(|(a, b)| a.1 < b.1).count();
    let n = seeds_of(t);
    outcome(
        n >= 3 && lstm < ls && lstm < lmmse,
        format!("10 dB over {n} seeds: LSTM {lstm:.4} vs LS {ls:.4}, LMMSE {lmmse:.4} (LSTM ahead of LMMSE on {wins}/{n})"),
    )
}

fn fig9b(t: &ResultTable) -> Outcome {
    let dims = [16, 64, 128];
    let snr = t.rows()[0].snr_db;
    let n = seeds_of(t);
    let per_seed: BTreeMap<u64, Vec<f64>> = t.rows().iter().fold(BTreeMap::new(), |mut acc, r| {
        acc.entry(r.seed).or_insert_with(|| vec![0.0; dims.len()])[dims.iter().position(|d| r.method == format!("ae_nl{d}")).unwrap()] = r.value;
        acc
    });
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let means: Vec<f64> = dims.iter().map(|d| mean(t, &format!("ae_nl{d}"), snr, "mse")).collect();
    let seeds_ok = per_seed.values().filter(|v| decreasing(v)).count();
    outcome(
        n >= 3 && seeds_ok == n,
        format!("test MSE over N_l {dims:?}: {:.4} > {:.4} > {:.4} (mean); strictly decreasing on {seeds_ok}/{n} seeds", means[0], means[1], means[2]),
    )
}

fn fig10b(t: &ResultTable) -> Outcome {
    let snr = t.rows()[0].snr_db;
    let n = seeds_of(t);
    let (real, meta, van) = (mean(t, "real", snr, "mse"), mean(t, "meta_gan", snr, "mse"), mean(t, "vanilla_gan", snr, "mse"));
    let pairs: Vec<f64> = t.series("vanilla_gan", snr, "mse").iter().zip(t.series("meta_gan", snr, "mse")).map(|(v, m)| v.1 - m.1).collect();
    let wins = pairs.iter().filter(|&&d| d > 0.0).count();
    outcome(
        n >= 5 && meta < van && real <= meta && real <= van,
        format!("{n} seeds: downstream MSE real {real:.4} ≤ meta-GAN {meta:.4} < vanilla-GAN {van:.4} (meta ahead on {wins}/{n} paired seeds)"),
    )
}

type Check = fn() -> Outcome;
type FigureCheck = fn(&ResultTable) -> Outcome;

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));
    let work = tempfile::tempdir().expect("temp dir");
    let mut unexpected = Vec::new();
    let (mut total, mut passed) = (0, 0);
    let mut report = |name: &str, o: Outcome| {
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        total += 1;
        passed += usize::from(o.pass);
        if !o.pass && !KNOWN_GAPS.contains(&name) {
            unexpected.push(name.to_owned());
        }
    };

    let quick: [(&str, Check); 5] = [
        ("lmmse_oracle_equivalence", lmmse_oracle),
        ("lmmse_not_worse_than_ls", lmmse_risk),
        ("omp_matches_exhaustive_search", omp_brute_force),
        ("kronecker_and_sensing_identity", kronecker_sensing),
        ("gradient_suite", gradients),
    ];
    for (name, f) in quick {
        if wanted(name) {
            report(name, f());
        }
    }

    if wanted("fig6b_tap_detection") || wanted("determinism_fig6b") {
        let (table, first, secs) = reproduce("fig6b", 7, &work.path().join("fig6b_a"));
        if wanted("fig6b_tap_detection") {
            report("fig6b_tap_detection", fig6b(&table, secs));
        }
        if wanted("determinism_fig6b") {
            let (_, second, _) = reproduce("fig6b", 7, &work.path().join("fig6b_b"));
            let (a, b) = (std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
            report("determinism_fig6b", outcome(a == b, format!("two runs with --seed 7: {} and {} bytes, identical: {}", a.len(), b.len(), a == b)));
        }
    }
    let figures: [(&str, &str, FigureCheck); 4] = [
        ("fig5_aoa_ablation", "fig5", fig5),
        ("fig7b_parametric_lstm", "fig7b", fig7b),
        ("fig9b_csi_feedback", "fig9b", fig9b),
        ("fig10b_meta_gan", "fig10b", fig10b),
    ];
    for (name, figure, check) in figures {
        if wanted(name) {
            let (table, _, secs) = reproduce(figure, 1, &work.path().join(figure));
            let mut o = check(&table);
            o.detail += &format!("; {secs:.0} s");
            report(name, o);
        }
    }

    println!("{passed}/{total} criteria passed");
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
