//! Reproduction checks at their pinned tolerances. One line per criterion.
//!
//! Criteria listed in `KNOWN_DEVIATIONS` still print FAIL when they fail but
//! do not fail the run; the README explains each one.

use std::process::ExitCode;
use std::time::Instant;

use oia_core::analytic::{
    oia_first_cells, oia_second_cells, throughput_mpr_detailed, throughput_oia_detailed, ThroughputRecord,
};
use oia_core::channel::{make_interference_spaces, SlotChannels};
use oia_core::harness::{
    estimate_mpr_total_table, estimate_success_tables, find_max_where, preset, run_sweep, ExperimentPlan, MaxPoint,
    Preset, Series, TablePlan,
};
use oia_core::matkernels::*;
use oia_core::phy::{build_leakage_matrix, svd_beamformer};
use oia_core::protocols::{run_slot, user_beam, warm_up, ProtocolContext, Receiver};
use oia_core::rng::{Purpose, StreamSource};
use oia_core::{NetworkConfig, ProtocolKind, UserId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;
const KNOWN_DEVIATIONS: [u32; 1] = [2];

struct Report {
    unexpected: Vec<u32>,
}

impl Report {
    fn line(&mut self, id: u32, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        let note = if !pass && KNOWN_DEVIATIONS.contains(&id) { " [known deviation]" } else { "" };
        println!("{tag} criterion {id}: {detail}{note}");
        if !pass && !KNOWN_DEVIATIONS.contains(&id) {
            self.unexpected.push(id);
        }
    }
}

fn base() -> NetworkConfig {
    NetworkConfig { k: 3, n: 10, m: 3, l: 3, s: 3, p: 0.15, seed: SEED, ..Default::default() }
}

fn curve(records: &[ThroughputRecord], kind: ProtocolKind, s: usize) -> Vec<&ThroughputRecord> {
    records.iter().filter(|r| r.protocol == kind && (kind == ProtocolKind::Mpr || r.s == s)).collect()
}

fn peak(records: &[ThroughputRecord], kind: ProtocolKind, s: usize) -> MaxPoint {
    find_max_where(records, |r| r.protocol == kind && (kind == ProtocolKind::Mpr || r.s == s)).expect("curve present")
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn at_p<'a>(c: &[&'a ThroughputRecord], p: f64) -> &'a ThroughputRecord {
    c.iter().find(|r| (r.p - p).abs() < 1e-9).expect("grid point")
}

/// Figs. 5 and 6 share one sweep: every curve sees the same channels.
fn k3_sweep() -> Vec<ThroughputRecord> {
    let series = vec![
        Series { protocol: ProtocolKind::Mpr, s: None },
        Series { protocol: ProtocolKind::In, s: Some(1) },
        Series { protocol: ProtocolKind::Oia, s: Some(1) },
        Series { protocol: ProtocolKind::Oia, s: Some(3) },
        Series { protocol: ProtocolKind::OiaNoTxbf, s: Some(3) },
        Series { protocol: ProtocolKind::OiaNoOra, s: Some(3) },
    ];
    let plan = ExperimentPlan::new(base(), series, ExperimentPlan::p_grid(0.01, 0.30, 0.01).unwrap());
    run_sweep(&plan).expect("K=3 sweep").records
}

fn criterion_1(rep: &mut Report, rec: &[ThroughputRecord]) {
    let oia = peak(rec, ProtocolKind::Oia, 3);
    let mpr = peak(rec, ProtocolKind::Mpr, 0);
    let gain = oia.throughput / mpr.throughput - 1.0;
    let pass = within(oia.throughput, 2.01, 0.10) && within(mpr.throughput, 0.86, 0.05) && (1.10..=1.55).contains(&gain);
    rep.line(
        1,
        pass,
        format!(
            "max OIA(S=3) {:.3} @ p={:.2} (2.01±0.10), max MPR {:.3} @ p={:.2} (0.86±0.05), gain {:.1}% ([110,155])",
            oia.throughput,
            oia.p,
            mpr.throughput,
            mpr.p,
            100.0 * gain
        ),
    );
}

fn criterion_2(rep: &mut Report, rec: &[ThroughputRecord]) {
    let oia = peak(rec, ProtocolKind::Oia, 3).throughput;
    let no_ora = peak(rec, ProtocolKind::OiaNoOra, 3).throughput;
    let no_txbf = peak(rec, ProtocolKind::OiaNoTxbf, 3).throughput;
    let g_ora = oia / no_ora - 1.0;
    let g_txbf = oia / no_txbf - 1.0;
    let pass = within(no_ora, 1.02, 0.08)
        && within(no_txbf, 1.51, 0.10)
        && within(100.0 * g_ora, 97.0, 15.0)
        && within(100.0 * g_txbf, 33.0, 15.0);
    rep.line(
        2,
        pass,
        format!(
            "max w/o-ORA {no_ora:.3} (1.02±0.08), max w/o-TX-BF {no_txbf:.3} (1.51±0.10), \
             OIA gains {:.1}% (97±15) / {:.1}% (33±15)",
            100.0 * g_ora,
            100.0 * g_txbf
        ),
    );
}

fn criterion_3(rep: &mut Report, rec: &[ThroughputRecord]) {
    let a = curve(rec, ProtocolKind::In, 1);
    let b = curve(rec, ProtocolKind::Oia, 1);
    assert_eq!(a.len(), b.len());
    let mut worst = (0.0f64, 0.0);
    for (x, y) in a.iter().zip(&b) {
        let z = (x.throughput - y.throughput).abs() / x.stderr.hypot(y.stderr).max(1e-12);
        if z > worst.0 {
            worst = (z, x.p);
        }
    }
    rep.line(
        3,
        worst.0 <= 2.0,
        format!("IN vs OIA(S=1) over {} p points: worst gap {:.2} pooled SE @ p={:.2} (<= 2)", a.len(), worst.0, worst.1),
    );
}

fn criterion_4(rep: &mut Report) {
    let cfg = NetworkConfig { k: 8, m: 8, l: 8, s: 8, ..base() };
    let series = ExperimentPlan::cross_series(&[ProtocolKind::Mpr, ProtocolKind::Oia], &[8]);
    let mut plan = ExperimentPlan::new(cfg, series, ExperimentPlan::p_grid(0.01, 0.30, 0.01).unwrap());
    plan.slots = 20_000;
    plan.replications = 1;
    plan.warmup_samples = 10_000;
    let rec = run_sweep(&plan).expect("K=8 sweep").records;
    let oia = peak(&rec, ProtocolKind::Oia, 8);
    let mpr = peak(&rec, ProtocolKind::Mpr, 0);
    let gain = 100.0 * (oia.throughput / mpr.throughput - 1.0);
    let (lo, hi) = (0.75 * 98.4, 1.25 * 98.4);
    rep.line(
        4,
        (lo..=hi).contains(&gain),
        format!(
            "K=M=L=S=8: OIA {:.3} @ p={:.2}, MPR {:.3} @ p={:.2}, gain {gain:.1}% ([{lo:.1}, {hi:.1}])",
            oia.throughput, oia.p, mpr.throughput, mpr.p
        ),
    );
}

fn criterion_5(rep: &mut Report) {
    let Some(Preset::Table(plan)) = preset("fig4", SEED) else { panic!("fig4 preset") };
    assert!(plan.samples_per_cell >= 2000);
    let table = estimate_success_tables(&plan).expect("fig4 table");
    let mut violations = Vec::new();
    let mut compared = 0;
    for (&(m, j), c) in table.cells() {
        for next in [(m + 1, j), (m, j + 1)] {
            if let Some(d) = table.cell(next.0, next.1) {
                compared += 1;
                if d.prob > c.prob + 2.0 * c.stderr().hypot(d.stderr()) {
                    violations.push(((m, j), next));
                }
            }
        }
    }
    rep.line(
        5,
        violations.is_empty() && table.len() == plan.cells.len(),
        format!(
            "{} cells x {} samples, {compared} neighbour pairs, {} rises beyond 2 SE {:?}",
            table.len(),
            plan.samples_per_cell,
            violations.len(),
            violations
        ),
    );
}

fn criterion_6(rep: &mut Report) {
    let mut max_feasible = 0.0f64;
    let mut min_infeasible = f64::INFINITY;
    let mut combos = 0;
    for k in 2..=4usize {
        for s in 1..=3usize {
            for l in 1..=6usize {
                let rows = (k - 1) * s;
                if rows == l {
                    continue;
                }
                combos += 1;
                let cfg = NetworkConfig { k, n: 1, m: s + 1, l, s, seed: SEED, ..Default::default() };
                let src = StreamSource::new(SEED ^ ((k * 100 + s * 10 + l) as u64));
                let spaces = make_interference_spaces(&cfg, &src).unwrap();
                for inst in 0..1000u64 {
                    let mut ch = SlotChannels::new(&cfg, &src, Purpose::Channel, inst);
                    let g = build_leakage_matrix(UserId::new(0, 0), &mut ch, &spaces);
                    let lif = svd_beamformer(&g).unwrap().lif;
                    if rows < l {
                        max_feasible = max_feasible.max(lif);
                    } else {
                        min_infeasible = min_infeasible.min(lif);
                    }
                }
            }
        }
    }
    rep.line(
        6,
        max_feasible < 1e-10 && min_infeasible > 1e-12,
        format!(
            "{combos} (K,L,S) classes x 1000: max LIF when (K-1)S<L {max_feasible:.2e} (<1e-10), \
             min LIF when (K-1)S>L {min_infeasible:.2e} (>1e-12)"
        ),
    );
}

fn criterion_7(rep: &mut Report, rec: &[ThroughputRecord]) {
    let mut lines = Vec::new();
    let mut pass = true;
    let mpr_table = estimate_mpr_total_table(&base(), 20_000).expect("MPR table");
    let mpr_sim = curve(rec, ProtocolKind::Mpr, 0);
    for p in [0.05, 0.15, 0.25] {
        let cfg = NetworkConfig { p, ..base() };
        let a = throughput_mpr_detailed(&cfg, &mpr_table).expect("complete MPR table");
        let s = at_p(&mpr_sim, p);
        let z = (a.throughput - s.throughput).abs() / a.stderr.hypot(s.stderr);
        pass &= z <= 2.0;
        lines.push(format!("MPR p={p:.2} analytic {:.4} sim {:.4} ({z:.2} SE)", a.throughput, s.throughput));
    }
    let cfg = base();
    let mut cells = oia_first_cells(&cfg);
    cells.extend(oia_second_cells(&cfg));
    cells.sort();
    cells.dedup();
    let plan = TablePlan {
        protocol: ProtocolKind::Oia,
        cfg: cfg.clone(),
        cells,
        samples_per_cell: 4_000,
        warmup_samples: ExperimentPlan::DEFAULT_WARMUP,
        shared_cdf: true,
        receiver: Receiver::Adaptive,
    };
    let table = estimate_success_tables(&plan).expect("OIA table");
    let a = throughput_oia_detailed(&cfg, &table, &table).expect("complete OIA table");
    let s = at_p(&curve(rec, ProtocolKind::Oia, 3), 0.15);
    let z = (a.throughput - s.throughput).abs() / a.stderr.hypot(s.stderr);
    pass &= z <= 2.0;
    lines.push(format!("OIA p=0.15 analytic {:.4} sim {:.4} ({z:.2} SE)", a.throughput, s.throughput));
    rep.line(7, pass, format!("{} (each <= 2 combined SE)", lines.join("; ")));
}

/// Asymptotic Kolmogorov distribution tail.
fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        sum += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
    }
    sum.clamp(0.0, 1.0)
}

fn criterion_8(rep: &mut Report) {
    let cfg = base();
    let src = StreamSource::new(SEED ^ 0x8);
    let spaces = make_interference_spaces(&cfg, &src).unwrap();
    let cdfs = warm_up(ProtocolKind::Oia, &cfg, &spaces, &src, ExperimentPlan::DEFAULT_WARMUP, true).unwrap();
    let ctx = ProtocolContext::new(ProtocolKind::Oia, &cfg, &spaces, Some(&cdfs)).unwrap();
    let slots = 100_000u64;
    let mut counts = vec![0u64; cfg.total_users()];
    for slot in 0..slots {
        let out = run_slot(&ctx, &src, slot).unwrap();
        for (c, &t) in counts.iter_mut().zip(&out.transmitted) {
            *c += t as u64;
        }
    }
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / slots as f64).collect();
    let worst = freqs.iter().map(|f| (f - cfg.p).abs()).fold(0.0, f64::max);

    // fresh channels, disjoint from warm-up and measurement slots
    let fresh = StreamSource::new(SEED ^ 0x88);
    let n = 10_000;
    let mut u: Vec<f64> = (0..n as u64)
        .map(|slot| {
            let mut ch = SlotChannels::new(&cfg, &fresh, Purpose::Channel, slot);
            let user = UserId::new((slot % 3) as usize, 0);
            let (_, lif) =
                user_beam(ProtocolKind::Oia, user, &mut ch, &spaces, &fresh, Purpose::ReferenceBeam, slot, cfg.l).unwrap();
            cdfs.get(user.ran, user.user).eval(lif).unwrap()
        })
        .collect();
    u.sort_by(f64::total_cmp);
    let d = u
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - x).abs()))
        .fold(0.0, f64::max);
    let pv = ks_p_value(d, n);
    rep.line(
        8,
        worst <= 0.01 && pv > 0.01,
        format!(
            "p=0.15 over {slots} slots: worst per-user |freq - p| {worst:.4} (<= 0.01); \
             KS of F(LIF) on {n} fresh draws D={d:.4}, p-value {pv:.3} (> 0.01)"
        ),
    );
}

fn gram_error(a: &ComplexMatrix) -> f64 {
    a.adjoint_matmul(a).sub(&ComplexMatrix::identity(a.cols())).frobenius_norm()
}

fn criterion_9(rep: &mut Report) {
    const SHAPES: [(usize, usize); 10] = [(1, 1), (2, 2), (3, 2), (4, 3), (6, 3), (8, 8), (2, 3), (3, 5), (2, 8), (14, 7)];
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut failures = 0usize;
    for (r, c) in SHAPES {
        for _ in 0..1000 {
            let a = ComplexMatrix::random_gaussian(r, c, &mut rng);
            let s = svd(&a).unwrap();
            let rel = s.reconstruct().sub(&a).frobenius_norm() / a.frobenius_norm();
            let sorted = s.singular.windows(2).all(|w| w[0] >= w[1]) && s.singular.iter().all(|&x| x >= 0.0);
            if !(sorted && rel < 1e-8 && gram_error(&s.left) < 1e-10 && gram_error(&s.right) < 1e-10) {
                failures += 1;
            }
            // the beam's gain is the smallest over the unit sphere
            let (sigma, v) = right_singular_basis(&a).unwrap();
            let last = v.column(c - 1);
            let gain = vec_norm_sqr(&a.mul_vec(&last));
            let floor = if r >= c { sigma[c - 1].powi(2) } else { 0.0 };
            if (gain - floor).abs() > 1e-9 * (1.0 + floor) || gram_error(&v) > 1e-10 {
                failures += 1;
            }
            if r >= c {
                let pinv = pseudo_inverse(&a).unwrap();
                if pinv.matmul(&a).sub(&ComplexMatrix::identity(c)).frobenius_norm() > 1e-8 {
                    failures += 1;
                }
            }
            if r > c {
                let q = random_orthonormal(r, c, &mut rng).unwrap();
                let u = null_space(&q, r - c).unwrap();
                if gram_error(&q) > 1e-10 || gram_error(&u) > 1e-10 || q.adjoint_matmul(&u).frobenius_norm() > 1e-10 {
                    failures += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    rep.line(
        9,
        failures == 0 && secs < 60.0,
        format!("{} shape classes x 1000: {failures} invariant failures in {secs:.1} s (< 60 s)", SHAPES.len()),
    );
}

fn main() -> ExitCode {
    let mut rep = Report { unexpected: Vec::new() };
    let start = Instant::now();
    criterion_9(&mut rep);
    criterion_6(&mut rep);
    let rec = k3_sweep();
    criterion_1(&mut rep, &rec);
    criterion_2(&mut rep, &rec);
    criterion_3(&mut rep, &rec);
    criterion_5(&mut rep);
    criterion_7(&mut rep, &rec);
    criterion_8(&mut rep);
    criterion_4(&mut rep);
    println!("acceptance finished in {:.0} s", start.elapsed().as_secs_f64());
    if rep.unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {:?}", rep.unexpected);
        ExitCode::FAILURE
    }
}
