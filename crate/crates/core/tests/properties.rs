use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use otfs_isac::allocation::{zero_force, BinAllocation, EmptyBinPolicy};
use otfs_isac::channel::{radar_receive, SystemConfig, Target};
use otfs_isac::coarse::{angle_spectrum, coarse_estimate, CoarseConfig, PeakMode, SpectrumStrategy};
use otfs_isac::comm::{lmmse_equalize, transmit_chain, Receiver};
use otfs_isac::crlb::{assembled_information, asymptotic_fim, crlb_closed_form, crlb_numeric, CrlbDims, TargetParams};
use otfs_isac::harness::{run_experiment, ExperimentKind, RunOptions, Scenario};
use otfs_isac::ssr::{build_virtual_snapshot, omp, DenseDictionary, Dictionary, StopRule};
use otfs_isac::transforms::{isfft, sfft, SfftScale};
use otfs_isac::{DdGrid, TfGrid};
use proptest::prelude::*;

fn complex() -> impl Strategy<Value = Complex64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| Complex64::new(re, im))
}

fn grid_values(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec(complex(), len)
}

/// `(n, m, values)` with `n, m` in `1..=max`.
fn dd_grid(max: usize) -> impl Strategy<Value = DdGrid> {
    (1..=max, 1..=max).prop_flat_map(|(n, m)| grid_values(n * m).prop_map(move |v| DdGrid::from_vec(n, m, v)))
}

fn small_config(n: usize, m: usize, n_tx: usize, n_rx: usize) -> SystemConfig {
    SystemConfig {
        n_doppler: n,
        m_delay: m,
        n_tx,
        n_rx,
        ..SystemConfig::default()
    }
}

fn tx_grids(cfg: &SystemConfig, values: &[Complex64]) -> Vec<TfGrid> {
    let nm = cfg.nm();
    (0..cfg.n_tx)
        .map(|i| isfft(&DdGrid::from_vec(cfg.n_doppler, cfg.m_delay, values[i * nm..(i + 1) * nm].to_vec())))
        .collect()
}

/// Targets anywhere in the unambiguous delay/Doppler range of `cfg`.
fn targets(cfg: &SystemConfig, count: usize) -> impl Strategy<Value = Vec<Target>> {
    let tau_max = 1.0 / cfg.subcarrier_spacing_hz;
    let nu_max = cfg.doppler_resolution_hz() * cfg.n_doppler as f64 / 2.0;
    prop::collection::vec((-1.3f64..1.3, 0.0..tau_max, -nu_max..nu_max, complex()), count)
        .prop_map(|v| v.into_iter().map(|(a, t, d, g)| Target::new(a, t, d, g)).collect())
}

fn max_diff(a: &[TfGrid], b: &[TfGrid]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.max_abs_diff(y)).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transform_round_trip_and_parseval(x in dd_grid(16)) {
        let nm = x.len() as f64;
        let tf = isfft(&x);
        prop_assert!(sfft(&tf, SfftScale::Unit).max_abs_diff(&x) < 1e-10);
        prop_assert!((tf.norm_sqr() - x.norm_sqr() / nm).abs() < 1e-10 * (1.0 + x.norm_sqr()));
    }

    #[test]
    fn isfft_is_linear(
        (x, y) in (1..=12usize, 1..=12usize).prop_flat_map(|(n, m)| (grid_values(n * m), grid_values(n * m)).prop_map(move |(a, b)| (DdGrid::from_vec(n, m, a), DdGrid::from_vec(n, m, b)))),
        a in complex(),
        b in complex(),
    ) {
        let mut lhs = x.clone();
        lhs.scale(a);
        lhs.add_scaled(b, &y);
        let mut rhs = isfft(&x);
        rhs.scale(a);
        rhs.add_scaled(b, &isfft(&y));
        prop_assert!(isfft(&lhs).max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn allocation_symbol_count_and_zero_forcing(
        n_tx in 2..=4usize,
        n_private in 1..=4usize,
        values in grid_values(8 * 12),
    ) {
        let (n, m) = (8, 12);
        let alloc = BinAllocation::diagonal(n_tx, n_private, &EmptyBinPolicy::Conditioned { n_doppler: n, m_delay: m }).unwrap();
        prop_assert_eq!(alloc.total_info_symbols(n, m), n_tx * n * m - n_private * (n_tx - 1));
        let tf = TfGrid::from_vec(n, m, values);
        for i in 0..n_tx {
            let z = zero_force(&tf, &alloc, i);
            for r in 0..n {
                for c in 0..m {
                    let zeroed = alloc.zero_bins(i).iter().any(|b| b.row == r && b.col == c);
                    let expect = if zeroed { Complex64::new(0.0, 0.0) } else { tf[(r, c)] };
                    prop_assert_eq!(z[(r, c)], expect);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Transmit chain followed by the modified SFFT returns the bits, for any
    /// allocation whose reduced transform is invertible.
    #[test]
    fn modified_sfft_recovers_information_symbols(
        n in 3..=8usize,
        m in 4..=10usize,
        n_tx in 2..=4usize,
        n_private in 1..=3usize,
        mirror in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let cfg = small_config(n, m, n_tx, 2);
        let policy = if mirror { EmptyBinPolicy::MirrorZeroed } else { EmptyBinPolicy::Conditioned { n_doppler: n, m_delay: m } };
        let alloc = BinAllocation::diagonal(n_tx, n_private.min(n).min(m), &policy).unwrap();
        let rx = Receiver::new(&alloc, &cfg);
        prop_assume!(rx.is_ok());
        let bits: Vec<u8> = {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (0..otfs_isac::comm::frame_bits(&alloc, &cfg)).map(|_| rng.random_range(0..2u8)).collect()
        };
        let frame = transmit_chain(&bits, &alloc, &cfg).unwrap();
        prop_assert_eq!(rx.unwrap().demap_tf(&frame.tf), bits);
    }

    #[test]
    fn radar_receive_is_linear_and_order_free(
        (cfg, ts, x1, x2) in (2..=6usize, 2..=6usize, 1..=3usize, 1..=4usize).prop_flat_map(|(n, m, nt, nr)| {
            let cfg = small_config(n, m, nt, nr);
            let len = nt * n * m;
            (Just(cfg.clone()), targets(&cfg, 3), grid_values(len), grid_values(len))
        }),
        a in complex(),
        b in complex(),
    ) {
        let g1 = tx_grids(&cfg, &x1);
        let g2 = tx_grids(&cfg, &x2);
        let mixed: Vec<TfGrid> = g1.iter().zip(&g2).map(|(p, q)| {
            let mut s = p.clone();
            s.scale(a);
            s.add_scaled(b, q);
            s
        }).collect();
        let r1 = radar_receive(&g1, &ts, &cfg);
        let r2 = radar_receive(&g2, &ts, &cfg);
        let combined: Vec<TfGrid> = r1.iter().zip(&r2).map(|(p, q)| {
            let mut s = p.clone();
            s.scale(a);
            s.add_scaled(b, q);
            s
        }).collect();
        prop_assert!(max_diff(&radar_receive(&mixed, &ts, &cfg), &combined) < 1e-9);

        let reversed: Vec<Target> = ts.iter().rev().copied().collect();
        prop_assert!(max_diff(&r1, &radar_receive(&g1, &reversed, &cfg)) < 1e-12);
    }

    #[test]
    fn omp_residual_never_grows(
        (rows, cols, values) in (8..=24usize, 10..=30usize).prop_flat_map(|(r, c)| (Just(r), Just(c), grid_values(r * c))),
        y in grid_values(24),
        k in 1..=6usize,
    ) {
        let dict = DenseDictionary::from_matrix(DMatrix::from_vec(rows, cols, values));
        for c in 0..cols {
            let norm: f64 = dict.column(c).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }
        let res = omp(&y[..rows], &dict, StopRule::Sparsity(k.min(rows))).unwrap();
        for w in res.residual_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn lmmse_satisfies_normal_equations(
        (rows, cols, h, y) in (2..=12usize, 2..=12usize).prop_flat_map(|(r, c)| (Just(r), Just(c), grid_values(r * c), grid_values(r))),
        noise_var in 1e-6f64..10.0,
    ) {
        let h = DMatrix::from_vec(rows, cols, h);
        let y = DVector::from_vec(y);
        let x = lmmse_equalize(&y, &h, noise_var).unwrap();
        let hh = h.adjoint();
        let lhs = (&hh * &h) * &x + x.scale(noise_var);
        let rhs = &hh * &y;
        prop_assert!((lhs - &rhs).norm() <= 1e-8 * rhs.norm().max(1e-300));
    }

    /// The snapshot divides by the transmitted private symbol, so any common
    /// scaling of the transmit frame cancels.
    #[test]
    fn virtual_snapshot_ignores_symbol_scaling(
        (cfg, ts, x) in (1..=3usize, 1..=4usize).prop_flat_map(|(np, nr)| {
            let cfg = small_config(6, 8, 4, nr);
            (Just((cfg.clone(), np)), targets(&cfg, 2), grid_values(4 * 48))
        }),
        c in complex().prop_filter("nonzero", |c| c.norm() > 0.1),
    ) {
        let (cfg, np) = cfg;
        let alloc = BinAllocation::diagonal(4, np, &EmptyBinPolicy::Conditioned { n_doppler: 6, m_delay: 8 }).unwrap();
        let tx: Vec<TfGrid> = tx_grids(&cfg, &x).iter().enumerate().map(|(i, g)| zero_force(g, &alloc, i)).collect();
        let scaled: Vec<TfGrid> = tx.iter().map(|g| { let mut s = g.clone(); s.scale(c); s }).collect();
        let a = build_virtual_snapshot(&radar_receive(&tx, &ts, &cfg), &tx, &alloc);
        prop_assume!(a.is_ok());
        let b = build_virtual_snapshot(&radar_receive(&scaled, &ts, &cfg), &scaled, &alloc).unwrap();
        let a = a.unwrap();
        let scale = a.values.iter().map(|v| v.norm()).fold(1.0, f64::max);
        for (p, q) in a.values.iter().zip(&b.values) {
            prop_assert!((p - q).norm() < 1e-9 * scale);
        }
    }

    #[test]
    fn crlb_fim_is_symmetric_psd_and_closed_forms_agree(
        n in 2..=64usize,
        m in 2..=128usize,
        n_rx in 2..=16usize,
        snr_db in -20.0f64..30.0,
    ) {
        let d = CrlbDims { n, m, n_rx, subcarrier_spacing_hz: 120e3, subsymbol_duration_s: 1.0 / 120e3 };
        let f = asymptotic_fim(&d, snr_db, 1.0);
        let scale = f.abs().max();
        prop_assert!((f - f.transpose()).abs().max() <= 1e-12 * scale);
        let min_eig = f.symmetric_eigenvalues().min();
        prop_assert!(min_eig >= -1e-8 * scale);
        let closed = crlb_closed_form(&d, snr_db, 1.0);
        if let Some(num) = crlb_numeric(&d, snr_db, 1.0) {
            prop_assert!((num[0] / closed.tau - 1.0).abs() < 1e-8);
            prop_assert!((num[1] / closed.nu - 1.0).abs() < 1e-8);
            prop_assert!((num[2] / closed.omega_exact - 1.0).abs() < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn assembled_information_is_symmetric_psd(
        tau_bins in 0.0f64..6.0,
        nu_bins in -2.0f64..2.0,
        omega in -3.0f64..3.0,
        phase in -3.0f64..3.0,
    ) {
        let d = CrlbDims { n: 4, m: 6, n_rx: 3, subcarrier_spacing_hz: 120e3, subsymbol_duration_s: 1.0 / 120e3 };
        let p = TargetParams {
            tau: tau_bins / (d.m as f64 * d.subcarrier_spacing_hz),
            nu: nu_bins / (d.n as f64 * d.subsymbol_duration_s),
            omega,
            phase,
            beta: Complex64::new(1.0, 0.0),
        };
        let f = assembled_information(&p, &d);
        let scale = f.abs().max();
        prop_assert!((f - f.transpose()).abs().max() <= 1e-10 * scale);
        prop_assert!(f.symmetric_eigenvalues().min() >= -1e-8 * scale);
    }

    /// A common complex factor on every transmit symbol scales the averaged
    /// spectrum by `|c|^2` and leaves its peaks where they were.
    #[test]
    fn angle_peaks_ignore_common_symbol_scaling(
        (cfg, ts, x) in Just(small_config(8, 8, 2, 8)).prop_flat_map(|cfg| (Just(cfg.clone()), targets(&cfg, 2), grid_values(2 * 64))),
        c in complex().prop_filter("nonzero", |c| c.norm() > 0.1),
    ) {
        let tx = tx_grids(&cfg, &x);
        let scaled: Vec<TfGrid> = tx.iter().map(|g| { let mut s = g.clone(); s.scale(c); s }).collect();
        let spectrum = |grids: &[TfGrid]| {
            let rx: Vec<DdGrid> = radar_receive(grids, &ts, &cfg).iter().map(|g| sfft(g, SfftScale::Unit)).collect();
            angle_spectrum(&rx, &cfg, PeakMode::Threshold(0.5), 8, SpectrumStrategy::Averaged).unwrap()
        };
        prop_assert_eq!(spectrum(&tx).peaks, spectrum(&scaled).peaks);
    }

    #[test]
    fn coarse_estimates_do_not_depend_on_target_order(
        picks in prop::sample::subsequence((0..5usize).collect::<Vec<_>>(), 2..=3),
        seed in any::<u64>(),
    ) {
        let cfg = small_config(16, 32, 2, 8);
        // Well separated on-grid targets so every detection is unambiguous.
        let pool = [(-40.0f64, 3usize, 2i64), (-15.0, 9, -5), (5.0, 17, 6), (25.0, 24, -2), (50.0, 12, 4)];
        let ts: Vec<Target> = picks.iter().map(|&i| {
            let (a, l, k) = pool[i];
            Target::new(a.to_radians(), l as f64 * cfg.delay_resolution_s(), k as f64 * cfg.doppler_resolution_hz(), Complex64::new(1.0, 0.0))
        }).collect();
        let values: Vec<Complex64> = {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (0..2 * cfg.nm()).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
        };
        let tx = tx_grids(&cfg, &values);
        let tx_dd: Vec<DdGrid> = tx.iter().map(|g| sfft(g, SfftScale::Unit)).collect();
        let run = |t: &[Target]| {
            let rx: Vec<DdGrid> = radar_receive(&tx, t, &cfg).iter().map(|g| sfft(g, SfftScale::Unit)).collect();
            let opts = CoarseConfig { n_targets: Some(t.len()), ..CoarseConfig::default() };
            let mut est: Vec<(i64, i64, usize)> = coarse_estimate(&rx, &tx_dd, &cfg, &opts)
                .unwrap()
                .iter()
                .map(|e| ((e.angle * 1e9).round() as i64, e.doppler_index, e.delay_index))
                .collect();
            est.sort();
            est
        };
        let reversed: Vec<Target> = ts.iter().rev().copied().collect();
        prop_assert_eq!(run(&ts), run(&reversed));
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let mut s = Scenario::new("threads", ExperimentKind::CoarseAngleMse);
    s.system.n_doppler = 16;
    s.system.m_delay = 16;
    s.trials = 6;
    s.snr_db = vec![0.0, 10.0];
    let run = |threads| {
        run_experiment(
            &s,
            &RunOptions {
                threads: Some(threads),
                ..RunOptions::default()
            },
        )
        .unwrap()
        .records
    };
    assert_eq!(run(1), run(3));
}
