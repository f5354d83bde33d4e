//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! `cargo test -p donorsim-cli --test acceptance`

use std::collections::HashMap;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use donorsim::dsl::{
    self, BindingMode, DelaySpec, SequenceAst, Span, Stmt, StmtKind, TimeLit, TimeUnit,
};
use donorsim::fit::{fit_peaks, fit_stretched_exp, Peak, PeakShape, StretchedExpGuess};
use donorsim::program::{DelayTime, Event, PulseProgram};
use donorsim::pulse::{
    hahn_experiment, max_magnitude_estimate, simulate_4level, EnsembleSpec, FourLevelDrive,
    NoiseModel,
};
use donorsim::pump::{
    evolve_populations, optical_spectrum, rate_matrix, OpticalScan, PopulationState, PumpConfig,
    PumpSetting,
};
use donorsim::rf::{rf_spectrum, RfSpectrumConfig};
use donorsim::series::DecaySeries;
use donorsim::spin::{
    self, breit_rabi_levels, clock_sensitivity, estimate_field_from_splitting, FieldVector,
    LevelLabel, SpinSystem, Transition,
};
use donorsim_cli::table::Table;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tolerances and limits, one block per criterion.
mod tol {
    pub const BREIT_RABI_REL: f64 = 1e-9;
    pub const BREIT_RABI_FIELDS: usize = 1000;
    pub const BREIT_RABI_SECONDS: f64 = 1.0;

    pub const ZERO_FIELD_REL: f64 = 1e-12;

    pub const CLOCK_SLOPE_KHZ_PER_UT: f64 = 1e-6;
    pub const CLOCK_CURVATURE_REL: f64 = 0.01;
    pub const SIDE_SLOPE_REL: f64 = 1e-4;

    pub const FIELD_TRUE_UT: f64 = 4.0;
    pub const FIELD_REL: f64 = 0.005;
    pub const FIELD_SECONDS: f64 = 5.0;

    pub const FORBIDDEN_RATIO: f64 = 1e-12;
    pub const DOMINANCE: f64 = 10.0;
    pub const INTERNAL_FIELD_UT: f64 = 6.0;
    pub const SIDEBAND_POSITION_REL: f64 = 0.15;
    pub const SIDEBAND_SHIFT_REL: f64 = 0.05;

    pub const POPULATION_SUM: f64 = 1e-9;
    pub const EXPM_ABS: f64 = 1e-6;

    pub const REFOCUS_ABS: f64 = 1e-9;
    pub const ENVELOPE_ABS: f64 = 1e-12;
    pub const FIT_REL: f64 = 1e-6;
    pub const OU_MEMBERS: usize = 10_000;
    pub const OU_POINTS: usize = 20;
    pub const ECHO_SECONDS: f64 = 120.0;

    pub const LEAK_DEGENERATE_MIN: f64 = 0.05;
    pub const LEAK_23UT_MAX: f64 = 0.01;
    pub const FOUR_LEVEL_SECONDS: f64 = 60.0;

    pub const MAXMAG_REL: f64 = 0.003;
    pub const MAXMAG_SHOTS: usize = 100;
    pub const MAXMAG_TRIALS: usize = 1000;
    pub const MAXMAG_MIN_FRACTION: f64 = 0.99;

    pub const DSL_PROGRAMS: usize = 1000;
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut argv = vec!["donorsim"];
    argv.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = donorsim_cli::run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

fn breit_rabi_equivalence() -> Outcome {
    let start = Instant::now();
    let sys = SpinSystem::default();
    let mut worst: f64 = 0.0;
    for b_ut in linspace(0.0, 5000.0, tol::BREIT_RABI_FIELDS) {
        let eig = spin::solve(&sys, &FieldVector::along_z(b_ut)).unwrap();
        let exact = breit_rabi_levels(&sys, b_ut).unwrap().as_array();
        // Relative to the largest level magnitude at that field; single levels pass
        // through zero inside the range.
        let scale = exact.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        for (num, ex) in eig.energies().iter().zip(exact) {
            worst = worst.max((num - ex).abs() / scale);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= tol::BREIT_RABI_REL && secs < tol::BREIT_RABI_SECONDS,
        format!(
            "max rel dev {worst:.2e} over {} fields, {secs:.3} s",
            tol::BREIT_RABI_FIELDS
        ),
    )
}

fn zero_field_structure() -> Outcome {
    let sys = SpinSystem::default();
    let eig = spin::solve(&sys, &FieldVector::ZERO).unwrap();
    let s = eig.energy(LevelLabel::S);
    let t = [LevelLabel::TMinus, LevelLabel::TZero, LevelLabel::TPlus].map(|l| eig.energy(l));
    let split_err = t
        .iter()
        .map(|e| ((e - s) / 117.53 - 1.0).abs())
        .fold(0.0, f64::max);
    let spread = (t.iter().cloned().fold(f64::MIN, f64::max)
        - t.iter().cloned().fold(f64::MAX, f64::min))
        / 117.53;
    outcome(
        split_err <= tol::ZERO_FIELD_REL && spread <= tol::ZERO_FIELD_REL,
        format!("splitting rel err {split_err:.1e}, triplet spread {spread:.1e} A"),
    )
}

fn clock_transition() -> Outcome {
    let sys = SpinSystem::default();
    let (slope, curv) = clock_sensitivity(&sys, Transition::SToTZero, 0.0).unwrap();
    let oracle = sys.gamma_sum().powi(2) / sys.hyperfine_a * 1e-3;
    let curv_err = (curv / oracle - 1.0).abs();
    let half = sys.gamma_diff() / 2.0;
    let (up, _) = clock_sensitivity(&sys, Transition::SToTPlus, 0.0).unwrap();
    let (down, _) = clock_sensitivity(&sys, Transition::SToTMinus, 0.0).unwrap();
    let side_err = (up / half - 1.0).abs().max((down / -half - 1.0).abs());
    outcome(
        slope.abs() < tol::CLOCK_SLOPE_KHZ_PER_UT
            && curv_err < tol::CLOCK_CURVATURE_REL
            && side_err < tol::SIDE_SLOPE_REL,
        format!(
            "|dν/dB| = {:.1e} kHz/µT, curvature {curv:.6e} vs {oracle:.6e} kHz/µT², T± slopes {up:.4}/{down:.4}",
            slope.abs()
        ),
    )
}

/// The `k` highest local maxima of `y`, sorted by position, with half-maximum widths.
fn peak_guesses(x: &[f64], y: &[f64], k: usize) -> Vec<Peak> {
    let mut idx: Vec<usize> = (1..y.len() - 1)
        .filter(|&i| y[i] >= y[i - 1] && y[i] > y[i + 1])
        .collect();
    idx.sort_by(|&a, &b| y[b].total_cmp(&y[a]));
    idx.truncate(k);
    idx.sort();
    idx.into_iter()
        .map(|i| {
            let (mut l, mut r) = (i, i);
            while l > 0 && y[l] > y[i] / 2.0 {
                l -= 1;
            }
            while r + 1 < y.len() && y[r] > y[i] / 2.0 {
                r += 1;
            }
            Peak {
                center: x[i],
                width: x[r] - x[l],
                amplitude: y[i],
            }
        })
        .collect()
}

fn field_calibration() -> Outcome {
    let start = Instant::now();
    let sys = SpinSystem::default();
    let grid = linspace(sys.hyperfine_a - 0.15, sys.hyperfine_a + 0.15, 3001);
    let b0 = FieldVector::along_z(tol::FIELD_TRUE_UT);
    let s = rf_spectrum(
        &sys,
        &b0,
        &Vector3::x(),
        &grid,
        &RfSpectrumConfig::default(),
    )
    .unwrap();
    let guesses = peak_guesses(&s.frequency, &s.total, 2);
    let fit = match fit_peaks(&s.frequency, &s.total, PeakShape::Lorentzian, &guesses, 0.0) {
        Ok(f) => f,
        Err(e) => return outcome(false, format!("fit failed: {e}")),
    };
    let split_khz = (fit.get("center1").unwrap() - fit.get("center0").unwrap()) * 1e3;
    let b = estimate_field_from_splitting(split_khz, &sys).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let err = (b / tol::FIELD_TRUE_UT - 1.0).abs();
    outcome(
        err <= tol::FIELD_REL && secs < tol::FIELD_SECONDS,
        format!("splitting {split_khz:.3} kHz → {b:.4} µT (rel err {err:.1e}), {secs:.2} s"),
    )
}

/// Spectrum columns from the `rf-spectrum` subcommand.
fn rf_cli(args: &[&str]) -> Result<Table, String> {
    let (code, out, err) = cli(&[&["rf-spectrum"], args].concat());
    if code != 0 {
        return Err(err);
    }
    Table::parse(&out).map_err(|e| e.to_string())
}

/// Mean offset from A of the internal-field spectrum above A + 40 kHz (kHz).
fn upper_sideband(t: &Table, a: f64) -> f64 {
    let f = t.column("frequency_mhz").unwrap();
    let v = t.column("internal").unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for (x, w) in f.iter().zip(&v) {
        if *x > a + 0.04 {
            num += (x - a) * w;
            den += w;
        }
    }
    num / den * 1e3
}

fn selection_rules() -> Result<Outcome, String> {
    let sys = SpinSystem::default();
    let mut worst: f64 = 0.0;
    for b_ut in [0.5, 4.0, 23.0, 100.0, 1000.0, 5000.0] {
        let eig = spin::solve(&sys, &FieldVector::along_z(b_ut)).unwrap();
        let c = |t: Transition, u: Vector3<f64>| {
            spin::coupling(&eig, &sys, LevelLabel::S, t.upper(), &u)
        };
        let par = c(Transition::SToTZero, Vector3::z());
        let perp =
            c(Transition::SToTPlus, Vector3::x()).min(c(Transition::SToTMinus, Vector3::x()));
        worst = worst
            .max(c(Transition::SToTPlus, Vector3::z()) / par)
            .max(c(Transition::SToTMinus, Vector3::z()) / par)
            .max(c(Transition::SToTZero, Vector3::x()) / perp);
    }
    let max_of = |t: &Table, col: &str| t.column(col).unwrap().into_iter().fold(0.0, f64::max);
    let perp = rf_cli(&["--b0-ut", "4", "--b1", "perpendicular"])?;
    let par = rf_cli(&["--b0-ut", "4", "--b1", "parallel"])?;
    let side = |t: &Table| max_of(t, "s_tplus").max(max_of(t, "s_tminus"));
    // An exactly vanishing minor line gives an infinite ratio.
    let perp_ratio = side(&perp) / max_of(&perp, "s_tzero");
    let par_ratio = max_of(&par, "s_tzero") / side(&par);

    let a = sys.hyperfine_a;
    let (lo, hi) = ((a - 0.15).to_string(), (a + 0.15).to_string());
    let band = |b0: &str| {
        rf_cli(&[
            "--b0-ut",
            b0,
            "--b1",
            "perpendicular",
            "--internal-fraction",
            "0.3",
            "--fmin-mhz",
            &lo,
            "--fmax-mhz",
            &hi,
            "--points",
            "3001",
        ])
        .map(|t| upper_sideband(&t, a))
    };
    let expect = tol::INTERNAL_FIELD_UT * sys.gamma_diff() / 2.0;
    let (s0, s1) = (band("0")?, band("1")?);
    let pos_ok = [s0, s1]
        .iter()
        .all(|s| (s / expect - 1.0).abs() < tol::SIDEBAND_POSITION_REL);
    let shift = (s1 - s0).abs() / expect;
    Ok(outcome(
        worst < tol::FORBIDDEN_RATIO
            && perp_ratio > tol::DOMINANCE
            && par_ratio > tol::DOMINANCE
            && pos_ok
            && shift < tol::SIDEBAND_SHIFT_REL,
        format!(
            "forbidden/allowed ≤ {worst:.1e}; ⊥ T±/T0 {perp_ratio:.1e}, ∥ T0/T± {par_ratio:.1e}; \
             sideband {s0:.1}/{s1:.1} kHz at B0 = 0/1 µT (expect {expect:.1})"
        ),
    ))
}

fn hyperpolarization() -> Outcome {
    let scan = OpticalScan::default();
    let cfg = PumpConfig::default();
    let grid = [scan.line_t_center, scan.line_s_center];
    let at = |s| {
        optical_spectrum(&grid, &scan, &cfg, s)
            .unwrap()
            .trace
            .values
    };
    let (off, on_t, on_s) = (
        at(PumpSetting::Off),
        at(PumpSetting::OnT),
        at(PumpSetting::OnS),
    );
    let ordering = on_t[0] < off[0] && on_t[1] > off[1] && on_s[1] < off[1] && on_s[0] > off[0];

    let pumped = PumpConfig {
        pump_rate_t: 4e4,
        pump_rate_s: 3e3,
        randomization_rate: 500.0,
        ..cfg
    };
    let p0 = PopulationState::thermal();
    let traj = evolve_populations(&p0, &pumped, 2e-3, 1e-7).unwrap();
    let m = rate_matrix(&pumped);
    let mut sum_err: f64 = 0.0;
    let mut expm_err: f64 = 0.0;
    for (k, (t, p)) in traj.times.iter().zip(&traj.states).enumerate() {
        sum_err = sum_err.max((p.total() - 1.0).abs());
        if k % 500 == 0 {
            let want = (m * *t).exp() * p0.as_vector();
            expm_err = expm_err.max((p.as_vector() - want).amax());
        }
    }
    outcome(
        ordering && sum_err < tol::POPULATION_SUM && expm_err < tol::EXPM_ABS,
        format!(
            "T line off/on-T {:.3}/{:.3}, S line off/on-T {:.3}/{:.3}; population drift {sum_err:.1e}, expm dev {expm_err:.1e}",
            off[0], on_t[0], off[1], on_t[1]
        ),
    )
}

fn fitted(series: &DecaySeries) -> Option<(f64, f64)> {
    let f = fit_stretched_exp(series, &StretchedExpGuess::from_series(series)).ok()?;
    Some((f.get("t2")?, f.get("n")?))
}

fn ou_spec(transition: Transition) -> EnsembleSpec {
    EnsembleSpec {
        transition,
        n_members: tol::OU_MEMBERS,
        seed: 2024,
        noise: NoiseModel {
            // σ_B such that the S→T± detuning noise is ≈ 300 rad/s at 4 µT.
            ou_sigma: 3.4e-3,
            ou_tau_c: 1e-3,
            ..NoiseModel::default()
        },
        ..EnsembleSpec::default().with_geometry(4.0, false)
    }
}

fn echo_physics() -> Outcome {
    let start = Instant::now();
    let taus = linspace(0.4, 8.0, tol::OU_POINTS);

    let static_only = EnsembleSpec {
        noise: NoiseModel {
            static_detuning_sigma: 5.0,
            ..NoiseModel::default()
        },
        ..EnsembleSpec::default()
    };
    let a = hahn_experiment(&static_only, &taus).unwrap();
    let refocus = a.signal.iter().map(|e| (e - 1.0).abs()).fold(0.0, f64::max);

    let pheno = EnsembleSpec {
        n_members: 4,
        noise: NoiseModel {
            phenomenological_t2: Some(10.0),
            stretching_n: 1.8,
            ..NoiseModel::default()
        },
        ..EnsembleSpec::default()
    };
    let b = hahn_experiment(&pheno, &taus).unwrap();
    let env_err = b
        .tau
        .iter()
        .zip(&b.signal)
        .map(|(t, e)| (e - (-(2.0 * t / 10.0f64).powf(1.8)).exp()).abs())
        .fold(0.0, f64::max);
    let (t2_b, n_b) = fitted(&b).unwrap_or((f64::NAN, f64::NAN));
    let fit_ok = (t2_b / 10.0 - 1.0).abs() < tol::FIT_REL && (n_b / 1.8 - 1.0).abs() < tol::FIT_REL;

    let side_taus = linspace(1e-3, 20e-3, tol::OU_POINTS);
    let side = hahn_experiment(&ou_spec(Transition::SToTPlus), &side_taus).unwrap();
    let (t2_side, n_side) = fitted(&side).unwrap_or((f64::NAN, f64::NAN));
    // The clock line decays far more slowly; stretch its grid until it has decayed.
    let mut span = 20e-3;
    let mut clock = hahn_experiment(
        &ou_spec(Transition::SToTZero),
        &linspace(span / 20.0, span, tol::OU_POINTS),
    )
    .unwrap();
    while clock.signal.last().unwrap().abs() > 0.3 && span < 1e5 {
        span *= 10.0;
        clock = hahn_experiment(
            &ou_spec(Transition::SToTZero),
            &linspace(span / 20.0, span, tol::OU_POINTS),
        )
        .unwrap();
    }
    let (t2_clock, _) = fitted(&clock).unwrap_or((f64::NAN, f64::NAN));
    let secs = start.elapsed().as_secs_f64();
    outcome(
        refocus < tol::REFOCUS_ABS
            && env_err < tol::ENVELOPE_ABS
            && fit_ok
            && n_side > 1.0
            && t2_side < t2_clock
            && secs < tol::ECHO_SECONDS,
        format!(
            "(a) max |echo−1| {refocus:.1e}; (b) envelope dev {env_err:.1e}, fit T2 {t2_b:.7} n {n_b:.7}; \
             (c) T± T2 {t2_side:.3e} s n {n_side:.2}, T0 T2 {t2_clock:.3e} s; {secs:.1} s"
        ),
    )
}

fn addressability() -> Outcome {
    let start = Instant::now();
    let sys = SpinSystem::default();
    // Ω/2π = 32 kHz, set once from the resolved 23 µT coupling and then held fixed.
    let resolved = spin::solve(&sys, &FieldVector::along_z(23.0)).unwrap();
    let nominal = spin::coupling(
        &resolved,
        &sys,
        LevelLabel::S,
        LevelLabel::TZero,
        &Vector3::z(),
    );
    let b1 = 32e3 * 1e-6 / nominal;
    let mut leaks = Vec::new();
    for b_par in [23.0, 16.0, 8.0, 4.0, 2.0, 1.0, 0.5, 0.25, 0.0] {
        let b0 = FieldVector::new(0.4, 0.0, b_par);
        let eig = spin::solve(&sys, &b0).unwrap();
        let drive = FourLevelDrive {
            b1_amplitude: b1,
            b1_direction: Vector3::z(),
            rf_frequency: eig.energy(LevelLabel::TZero) - eig.energy(LevelLabel::S),
            nominal_coupling: nominal,
        };
        let prog = PulseProgram::new("pi").pulse(PI, 0.0);
        match simulate_4level(&prog.events, &sys, &b0, &drive) {
            Ok(p) => leaks.push((b_par, p.get(LevelLabel::TPlus) + p.get(LevelLabel::TMinus))),
            Err(e) => return outcome(false, format!("B∥ = {b_par} µT: {e}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let monotone = leaks.windows(2).all(|w| w[1].1 >= w[0].1);
    let first = leaks[0].1;
    let last = leaks[leaks.len() - 1].1;
    let listing: Vec<String> = leaks.iter().map(|(b, l)| format!("{b}:{l:.2e}")).collect();
    outcome(
        monotone
            && first < tol::LEAK_23UT_MAX
            && last > tol::LEAK_DEGENERATE_MIN
            && secs < tol::FOUR_LEVEL_SECONDS,
        format!("T± leakage by B∥ [µT] {}; {secs:.2} s", listing.join(" ")),
    )
}

fn max_magnitude() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut good = 0;
    for _ in 0..tol::MAXMAG_TRIALS {
        let shots: Vec<f64> = (0..tol::MAXMAG_SHOTS)
            .map(|_| (2.0 * PI * rng.random::<f64>()).cos())
            .collect();
        let est = max_magnitude_estimate(&shots).unwrap();
        if (est - 1.0).abs() <= tol::MAXMAG_REL {
            good += 1;
        }
    }
    let fraction = good as f64 / tol::MAXMAG_TRIALS as f64;
    // P(|cos φ| ≥ 1 − ε) = (2/π)·acos(1 − ε) per shot.
    let p = 2.0 / PI * (1.0 - tol::MAXMAG_REL).acos();
    let oracle = 1.0 - (1.0 - p).powi(tol::MAXMAG_SHOTS as i32);
    outcome(
        fraction >= tol::MAXMAG_MIN_FRACTION,
        format!(
            "{good}/{} trials within {}% (order-statistics oracle {oracle:.4})",
            tol::MAXMAG_TRIALS,
            tol::MAXMAG_REL * 100.0
        ),
    )
}

fn random_ast(rng: &mut ChaCha8Rng) -> SequenceAst {
    const WORDS: [&str; 6] = ["tau", "p1", "p2", "t_wait", "x", "echo2"];
    let word = |rng: &mut ChaCha8Rng| WORDS[rng.random_range(0..WORDS.len())].to_string();
    let num = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.5) {
            rng.random_range(-360i32..=360) as f64
        } else {
            rng.random_range(-1e3..1e3)
        }
    };
    let time = |rng: &mut ChaCha8Rng| TimeLit {
        value: rng.random_range(0.0..500.0),
        unit: [TimeUnit::Ns, TimeUnit::Us, TimeUnit::Ms, TimeUnit::S][rng.random_range(0..4)],
    };
    let n = rng.random_range(0..12);
    let statements = (0..n)
        .map(|_| {
            let kind = match rng.random_range(0..4) {
                0 => StmtKind::Cycle {
                    label: word(rng),
                    phases: (0..rng.random_range(1..5)).map(|_| num(rng)).collect(),
                },
                1 => StmtKind::Pulse {
                    label: rng.random_bool(0.5).then(|| word(rng)),
                    angle: num(rng),
                    phase: num(rng),
                    dur: rng.random_bool(0.3).then(|| time(rng)),
                },
                2 => StmtKind::Delay(DelaySpec::Time(time(rng))),
                _ => StmtKind::Delay(DelaySpec::Symbol(word(rng))),
            };
            Stmt {
                kind,
                span: Span::default(),
            }
        })
        .collect();
    SequenceAst {
        name: word(rng),
        statements,
        span: Span::default(),
    }
}

fn dsl_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut failures = 0;
    for _ in 0..tol::DSL_PROGRAMS {
        let ast = random_ast(&mut rng);
        if dsl::parse(&dsl::pretty_print(&ast)).ok().as_ref() != Some(&ast) {
            failures += 1;
        }
    }
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../sequences/hahn.seq"
    ))
    .unwrap();
    let prog = dsl::parse(&text)
        .ok()
        .and_then(|ast| dsl::compile(&ast, &HashMap::new(), BindingMode::AllowSymbolic).ok());
    let shape_ok = prog.as_ref().is_some_and(|p| {
        p.shot_count() == 2
            && (0..2).all(|k| {
                let shot = p.shot(k);
                let sign = if k == 0 { 0.0 } else { PI };
                let pulse = |e: &Event, angle: f64, phase: f64| {
                    matches!(e, Event::Pulse(q) if (q.angle - angle).abs() < 1e-12 && (q.phase - phase).abs() < 1e-12)
                };
                let tau = |e: &Event| matches!(e, Event::Delay(DelayTime::Symbol(s)) if s == "tau");
                shot.len() == 5
                    && pulse(&shot[0], PI / 2.0, sign)
                    && tau(&shot[1])
                    && pulse(&shot[2], PI, 0.0)
                    && tau(&shot[3])
                    && pulse(&shot[4], PI / 2.0, 0.0)
            })
    });
    outcome(
        failures == 0 && shape_ok,
        format!(
            "{} programs, {failures} round-trip failures; Hahn text → ±π/2:τ:π:τ:π/2 {}",
            tol::DSL_PROGRAMS,
            if shape_ok { "ok" } else { "mismatch" }
        ),
    )
}

fn determinism() -> Outcome {
    let runs: [&[&str]; 3] = [
        &[
            "hahn",
            "--members",
            "300",
            "--b0-ut",
            "4",
            "--transition",
            "t+",
            "--ou-sigma-ut",
            "0.003",
            "--static-sigma-khz",
            "2",
            "--tau-max-s",
            "0.02",
        ],
        &[
            "hahn",
            "--members",
            "40",
            "--b0-ut",
            "4",
            "--transition",
            "t+",
            "--ou-sigma-ut",
            "0.003",
            "--detection",
            "max-magnitude",
            "--shots",
            "20",
            "--tau-max-s",
            "0.02",
        ],
        &[
            "rabi",
            "--members",
            "200",
            "--pulse-mode",
            "finite",
            "--static-sigma-khz",
            "5",
            "--points",
            "50",
        ],
    ];
    let mut identical = true;
    let mut bytes = 0;
    for args in runs {
        let mut outputs = Vec::new();
        for threads in ["1", "4", "7", "4"] {
            let (code, out, err) = cli(&[args, &["--seed", "77", "--threads", threads]].concat());
            if code != 0 {
                return outcome(false, format!("{args:?} failed: {err}"));
            }
            outputs.push(out);
        }
        bytes += outputs[0].len();
        identical &= outputs.iter().all(|o| o == &outputs[0]);
    }
    outcome(
        identical,
        format!("3 experiments × threads 1/4/7/4, {bytes} bytes compared"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("Breit-Rabi equivalence", breit_rabi_equivalence),
        ("zero-field structure", zero_field_structure),
        ("clock transition", clock_transition),
        ("field calibration", field_calibration),
        ("selection rules and RF structure", || {
            selection_rules().unwrap_or_else(|e| outcome(false, e))
        }),
        ("hyperpolarization ordering", hyperpolarization),
        ("echo physics", echo_physics),
        ("addressability", addressability),
        ("max-magnitude estimator", max_magnitude),
        ("DSL round trip and Hahn compile", dsl_round_trip),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    let total = Instant::now();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        let mark = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "[{mark}] {:>2} {name}: {} ({})",
            i + 1,
            o.detail,
            fmt_duration(t.elapsed())
        );
        if !o.pass {
            failed += 1;
        }
    }
    println!(
        "acceptance: {}/{} passed in {}",
        criteria.len() - failed,
        criteria.len(),
        fmt_duration(total.elapsed())
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn fmt_duration(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}
