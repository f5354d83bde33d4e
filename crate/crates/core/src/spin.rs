//! Hyperfine spin Hamiltonian of the neutral phosphorus donor.
//!
//! Frequency units throughout: energies in MHz, gyromagnetic ratios in MHz/mT,
//! static fields in µT. The Hilbert space is the product basis
//! `{|↑⇑⟩, |↑⇓⟩, |↓⇑⟩, |↓⇓⟩}`, electron first, quantized along ẑ.

use std::fmt;

use nalgebra::{Matrix2, Matrix3, Matrix4, SymmetricEigen, Vector3, Vector4};
use num_complex::Complex64;
use thiserror::Error;

const UT_PER_MT: f64 = 1000.0;

/// Fields below this magnitude (µT) are treated as zero for axis selection.
pub const REFERENCE_FIELD_UT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpinError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Hyperfine constant and gyromagnetic ratios of the donor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinSystem {
    /// Contact hyperfine constant (MHz).
    pub hyperfine_a: f64,
    /// Electron gyromagnetic ratio (MHz/mT).
    pub gamma_s: f64,
    /// Nuclear gyromagnetic ratio (MHz/mT), entering with a minus sign.
    pub gamma_i: f64,
}

impl SpinSystem {
    /// ³¹P in ²⁸Si: A = 117.53 MHz, γS = 27.972 MHz/mT, γI = 17.251 kHz/mT.
    pub const PHOSPHORUS: SpinSystem = SpinSystem {
        hyperfine_a: 117.53,
        gamma_s: 27.972,
        gamma_i: 0.017251,
    };

    pub fn new(hyperfine_a: f64, gamma_s: f64, gamma_i: f64) -> Result<Self, SpinError> {
        let sys = SpinSystem {
            hyperfine_a,
            gamma_s,
            gamma_i,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<(), SpinError> {
        if !(self.hyperfine_a.is_finite() && self.hyperfine_a > 0.0) {
            return Err(SpinError::InvalidInput(format!(
                "hyperfine_a must be positive, got {}",
                self.hyperfine_a
            )));
        }
        if !(self.gamma_s.is_finite() && self.gamma_s > 0.0) {
            return Err(SpinError::InvalidInput(format!(
                "gamma_s must be positive, got {}",
                self.gamma_s
            )));
        }
        if !(self.gamma_i.is_finite() && self.gamma_i >= 0.0) {
            return Err(SpinError::InvalidInput(format!(
                "gamma_i must be non-negative, got {}",
                self.gamma_i
            )));
        }
        if self.gamma_s <= self.gamma_i {
            return Err(SpinError::InvalidInput(
                "gamma_s must exceed gamma_i".to_string(),
            ));
        }
        Ok(())
    }

    /// Linear Zeeman slope of the T± levels, γS − γI (MHz/mT, numerically kHz/µT).
    pub fn gamma_diff(&self) -> f64 {
        self.gamma_s - self.gamma_i
    }

    pub fn gamma_sum(&self) -> f64 {
        self.gamma_s + self.gamma_i
    }
}

impl Default for SpinSystem {
    fn default() -> Self {
        SpinSystem::PHOSPHORUS
    }
}

/// Magnetic field vector in µT.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldVector {
    pub bx: f64,
    pub by: f64,
    pub bz: f64,
}

impl FieldVector {
    pub const ZERO: FieldVector = FieldVector {
        bx: 0.0,
        by: 0.0,
        bz: 0.0,
    };

    pub fn new(bx: f64, by: f64, bz: f64) -> Self {
        FieldVector { bx, by, bz }
    }

    pub fn along_z(bz: f64) -> Self {
        FieldVector::new(0.0, 0.0, bz)
    }

    pub fn is_finite(&self) -> bool {
        self.bx.is_finite() && self.by.is_finite() && self.bz.is_finite()
    }

    pub fn magnitude(&self) -> f64 {
        self.as_vector().norm()
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.bx, self.by, self.bz)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        FieldVector::new(v.x, v.y, v.z)
    }

    /// Unit vector along the field, or ẑ when the field is below the reference threshold.
    pub fn axis(&self) -> Vector3<f64> {
        let m = self.magnitude();
        if m < REFERENCE_FIELD_UT {
            Vector3::z()
        } else {
            self.as_vector() / m
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        FieldVector::new(self.bx * k, self.by * k, self.bz * k)
    }
}

impl std::ops::Add for FieldVector {
    type Output = FieldVector;
    fn add(self, o: FieldVector) -> FieldVector {
        FieldVector::new(self.bx + o.bx, self.by + o.by, self.bz + o.bz)
    }
}

/// A 4×4 Hermitian operator in the electron⊗nucleus product basis (MHz).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix4(Matrix4<Complex64>);

impl HermitianMatrix4 {
    /// Wraps `m`, rejecting matrices that are not Hermitian to 1e-12 relative.
    pub fn new(m: Matrix4<Complex64>) -> Result<Self, SpinError> {
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        let dev = (m - m.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if !(dev <= 1e-12 * scale) {
            return Err(SpinError::InvalidInput(format!(
                "matrix is not Hermitian (deviation {dev:e})"
            )));
        }
        Ok(HermitianMatrix4(m))
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.0
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn pauli_half() -> [Matrix2<Complex64>; 3] {
    let z = c(0.0, 0.0);
    [
        Matrix2::new(z, c(0.5, 0.0), c(0.5, 0.0), z),
        Matrix2::new(z, c(0.0, -0.5), c(0.0, 0.5), z),
        Matrix2::new(c(0.5, 0.0), z, z, c(-0.5, 0.0)),
    ]
}

fn kron(a: &Matrix2<Complex64>, b: &Matrix2<Complex64>) -> Matrix4<Complex64> {
    Matrix4::from_fn(|r, col| a[(r / 2, col / 2)] * b[(r % 2, col % 2)])
}

/// Electron spin operators (Sx, Sy, Sz) on the product space.
pub fn electron_spin() -> [Matrix4<Complex64>; 3] {
    let id = Matrix2::identity();
    pauli_half().map(|s| kron(&s, &id))
}

/// Nuclear spin operators (Ix, Iy, Iz) on the product space.
pub fn nuclear_spin() -> [Matrix4<Complex64>; 3] {
    let id = Matrix2::identity();
    pauli_half().map(|s| kron(&id, &s))
}

/// Zeeman coupling operator `γS u·S − γI u·I` for a field `u` given in mT (result in MHz).
pub fn zeeman_operator(sys: &SpinSystem, u_mt: &Vector3<f64>) -> Matrix4<Complex64> {
    let s = electron_spin();
    let i = nuclear_spin();
    let mut m = Matrix4::zeros();
    for k in 0..3 {
        m += s[k] * c(sys.gamma_s * u_mt[k], 0.0) - i[k] * c(sys.gamma_i * u_mt[k], 0.0);
    }
    m
}

fn hyperfine_operator(sys: &SpinSystem) -> Matrix4<Complex64> {
    let s = electron_spin();
    let i = nuclear_spin();
    let mut m = Matrix4::zeros();
    for k in 0..3 {
        m += s[k] * i[k];
    }
    m * c(sys.hyperfine_a, 0.0)
}

/// Projection of total angular momentum F = S + I on the axis `n`.
fn total_spin_projection(n: &Vector3<f64>) -> Matrix4<Complex64> {
    let s = electron_spin();
    let i = nuclear_spin();
    let mut m = Matrix4::zeros();
    for k in 0..3 {
        m += (s[k] + i[k]) * c(n[k], 0.0);
    }
    m
}

/// Spin Hamiltonian `γS B·S − γI B·I + A S·I` in MHz for a field in µT.
pub fn build_hamiltonian(
    sys: &SpinSystem,
    b0: &FieldVector,
) -> Result<HermitianMatrix4, SpinError> {
    sys.validate()?;
    if !b0.is_finite() {
        return Err(SpinError::InvalidInput(format!(
            "non-finite field components {b0:?}"
        )));
    }
    let b_mt = b0.as_vector() / UT_PER_MT;
    let h = zeeman_operator(sys, &b_mt) + hyperfine_operator(sys);
    // Hermitian by construction; symmetrize away round-off.
    Ok(HermitianMatrix4((h + h.adjoint()) * c(0.5, 0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LevelLabel {
    S,
    TMinus,
    TZero,
    TPlus,
}

impl LevelLabel {
    pub const ALL: [LevelLabel; 4] = [
        LevelLabel::S,
        LevelLabel::TMinus,
        LevelLabel::TZero,
        LevelLabel::TPlus,
    ];

    fn index(self) -> usize {
        match self {
            LevelLabel::S => 0,
            LevelLabel::TMinus => 1,
            LevelLabel::TZero => 2,
            LevelLabel::TPlus => 3,
        }
    }
}

impl fmt::Display for LevelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LevelLabel::S => "S",
            LevelLabel::TMinus => "T-",
            LevelLabel::TZero => "T0",
            LevelLabel::TPlus => "T+",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub label: LevelLabel,
    /// Energy in MHz.
    pub energy: f64,
    pub eigenvector: Vector4<Complex64>,
}

/// Labeled eigenstates, stored in the order S, T−, T0, T+.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub levels: [Level; 4],
    pub field_at_solution: FieldVector,
}

impl EigenSystem {
    pub fn level(&self, label: LevelLabel) -> &Level {
        &self.levels[label.index()]
    }

    pub fn energy(&self, label: LevelLabel) -> f64 {
        self.level(label).energy
    }

    pub fn energies(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|k| self.levels[k].energy)
    }

    /// Matrix of eigenvectors as columns, in label order.
    pub fn basis(&self) -> Matrix4<Complex64> {
        Matrix4::from_columns(&[
            self.levels[0].eigenvector,
            self.levels[1].eigenvector,
            self.levels[2].eigenvector,
            self.levels[3].eigenvector,
        ])
    }
}

fn fix_phase(v: &mut Vector4<Complex64>) {
    let mut best = 0;
    for k in 1..4 {
        if v[k].norm() > v[best].norm() + 1e-12 {
            best = k;
        }
    }
    let p = v[best];
    if p.norm() > 0.0 {
        let rot = p.conj() / p.norm();
        *v *= rot;
    }
    let n = v.norm();
    *v /= c(n, 0.0);
}

/// Energy gap (MHz) below which eigenvalues are treated as one degenerate cluster.
const CLUSTER_GAP_MHZ: f64 = 1e-6;

/// Diagonalizes `h` and labels the levels by adiabatic connection to the zero-field
/// singlet/triplet manifold.
///
/// Degenerate clusters are resolved by diagonalizing F·n̂ inside the cluster, with n̂ the
/// field axis (ẑ when `b0` is below [`REFERENCE_FIELD_UT`]). This reproduces the labels of
/// an infinitesimal reference field along n̂.
pub fn eigensystem(
    h: &HermitianMatrix4,
    sys: &SpinSystem,
    b0: &FieldVector,
) -> Result<EigenSystem, SpinError> {
    sys.validate()?;
    if !b0.is_finite() {
        return Err(SpinError::InvalidInput("non-finite field".into()));
    }
    let eig = SymmetricEigen::new(*h.matrix());
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs: Vec<Vector4<Complex64>> = order
        .iter()
        .map(|&k| eig.eigenvectors.column(k).into_owned())
        .collect();

    let axis = b0.axis();
    let fz = total_spin_projection(&axis);
    let mut start = 0;
    while start < 4 {
        let mut end = start + 1;
        while end < 4 && vals[end] - vals[end - 1] < CLUSTER_GAP_MHZ {
            end += 1;
        }
        if end - start > 1 {
            resolve_cluster(&mut vecs[start..end], &fz);
            for k in start..end {
                vals[k] = rayleigh(h.matrix(), &vecs[k]);
            }
        }
        start = end;
    }

    for v in vecs.iter_mut() {
        fix_phase(v);
    }

    let levels = [0usize, 1, 2, 3].map(|k| Level {
        label: LevelLabel::ALL[k],
        energy: vals[k],
        eigenvector: vecs[k],
    });
    Ok(EigenSystem {
        levels,
        field_at_solution: *b0,
    })
}

fn rayleigh(h: &Matrix4<Complex64>, v: &Vector4<Complex64>) -> f64 {
    (v.adjoint() * h * v)[(0, 0)].re / v.norm_squared()
}

/// Rotates the vectors of a degenerate cluster onto eigenvectors of `fz`, ordered by
/// ascending projection so that T−, T0, T+ come out in label order.
fn resolve_cluster(vecs: &mut [Vector4<Complex64>], fz: &Matrix4<Complex64>) {
    let k = vecs.len();
    let mut proj = nalgebra::DMatrix::<Complex64>::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            proj[(a, b)] = (vecs[a].adjoint() * fz * vecs[b])[(0, 0)];
        }
    }
    let proj = (&proj + proj.adjoint()) * c(0.5, 0.0);
    let eig = proj.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let old: Vec<Vector4<Complex64>> = vecs.to_vec();
    for (slot, &col) in order.iter().enumerate() {
        let mut v = Vector4::zeros();
        for a in 0..k {
            v += old[a] * eig.eigenvectors[(a, col)];
        }
        vecs[slot] = v;
    }
}

/// Closed-form Breit-Rabi energies (MHz) in label order S, T−, T0, T+.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreitRabiLevels {
    pub s: f64,
    pub t_minus: f64,
    pub t_zero: f64,
    pub t_plus: f64,
}

impl BreitRabiLevels {
    pub fn as_array(&self) -> [f64; 4] {
        [self.s, self.t_minus, self.t_zero, self.t_plus]
    }

    pub fn energy(&self, label: LevelLabel) -> f64 {
        self.as_array()[label.index()]
    }
}

/// Breit-Rabi energies for a signed field along the quantization axis (mT).
fn breit_rabi_signed_mt(sys: &SpinSystem, b_mt: f64) -> BreitRabiLevels {
    let a = sys.hyperfine_a;
    let x = sys.gamma_sum() * b_mt / a;
    let root = (1.0 + x * x).sqrt();
    let lin = sys.gamma_diff() * b_mt / 2.0;
    BreitRabiLevels {
        s: -a / 4.0 - a / 2.0 * root,
        t_minus: a / 4.0 - lin,
        t_zero: -a / 4.0 + a / 2.0 * root,
        t_plus: a / 4.0 + lin,
    }
}

pub fn breit_rabi_levels(
    sys: &SpinSystem,
    b0_magnitude_ut: f64,
) -> Result<BreitRabiLevels, SpinError> {
    sys.validate()?;
    if !(b0_magnitude_ut.is_finite() && b0_magnitude_ut >= 0.0) {
        return Err(SpinError::InvalidInput(format!(
            "field magnitude must be finite and non-negative, got {b0_magnitude_ut}"
        )));
    }
    Ok(breit_rabi_signed_mt(sys, b0_magnitude_ut / UT_PER_MT))
}

/// One of the three singlet-to-triplet RF lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transition {
    SToTMinus,
    SToTZero,
    SToTPlus,
}

impl Transition {
    pub const ALL: [Transition; 3] = [
        Transition::SToTMinus,
        Transition::SToTZero,
        Transition::SToTPlus,
    ];

    pub fn upper(self) -> LevelLabel {
        match self {
            Transition::SToTMinus => LevelLabel::TMinus,
            Transition::SToTZero => LevelLabel::TZero,
            Transition::SToTPlus => LevelLabel::TPlus,
        }
    }

    /// Transition frequency (MHz) at a signed field along the quantization axis (µT).
    pub fn frequency_at(self, sys: &SpinSystem, b_ut: f64) -> f64 {
        let l = breit_rabi_signed_mt(sys, b_ut / UT_PER_MT);
        l.energy(self.upper()) - l.s
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S->{}", self.upper())
    }
}

impl std::str::FromStr for Transition {
    type Err = SpinError;
    fn from_str(s: &str) -> Result<Self, SpinError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "t0" | "s->t0" | "tzero" => Ok(Transition::SToTZero),
            "t+" | "s->t+" | "tplus" => Ok(Transition::SToTPlus),
            "t-" | "s->t-" | "tminus" => Ok(Transition::SToTMinus),
            other => Err(SpinError::InvalidInput(format!(
                "unknown transition '{other}' (expected t0, t+ or t-)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionLine {
    pub transition: Transition,
    pub from_label: LevelLabel,
    pub to_label: LevelLabel,
    /// MHz.
    pub frequency: f64,
    /// |⟨T|M(b̂₀)|S⟩| in MHz/mT.
    pub matrix_element_parallel: f64,
    /// |⟨T|M(ê⊥)|S⟩| in MHz/mT.
    pub matrix_element_perpendicular: f64,
}

/// A unit vector perpendicular to `n`, built from the coordinate axis least aligned with it.
pub fn perpendicular_axis(n: &Vector3<f64>) -> Vector3<f64> {
    let axes = [Vector3::x(), Vector3::y(), Vector3::z()];
    let mut best = axes[0];
    for a in axes {
        if a.dot(n).abs() < best.dot(n).abs() - 1e-12 {
            best = a;
        }
    }
    let v = best - n * best.dot(n);
    v / v.norm()
}

/// RF coupling |⟨upper| γS u·S − γI u·I |lower⟩| (MHz/mT) for a unit drive direction `u`.
pub fn coupling(
    eig: &EigenSystem,
    sys: &SpinSystem,
    lower: LevelLabel,
    upper: LevelLabel,
    u: &Vector3<f64>,
) -> f64 {
    let m = zeeman_operator(sys, u);
    let a = &eig.level(upper).eigenvector;
    let b = &eig.level(lower).eigenvector;
    (a.adjoint() * m * b)[(0, 0)].norm()
}

pub fn transition_table(eig: &EigenSystem, sys: &SpinSystem) -> Vec<TransitionLine> {
    let par = eig.field_at_solution.axis();
    let perp = perpendicular_axis(&par);
    let e_s = eig.energy(LevelLabel::S);
    Transition::ALL
        .iter()
        .map(|&t| {
            let up = t.upper();
            TransitionLine {
                transition: t,
                from_label: LevelLabel::S,
                to_label: up,
                frequency: (eig.energy(up) - e_s).max(0.0),
                matrix_element_parallel: coupling(eig, sys, LevelLabel::S, up, &par),
                matrix_element_perpendicular: coupling(eig, sys, LevelLabel::S, up, &perp),
            }
        })
        .collect()
}

/// Convenience: Hamiltonian plus labeled eigensystem at `b0`.
pub fn solve(sys: &SpinSystem, b0: &FieldVector) -> Result<EigenSystem, SpinError> {
    let h = build_hamiltonian(sys, b0)?;
    eigensystem(&h, sys, b0)
}

/// Field derivatives of a transition frequency from central differences on the closed form.
///
/// Returns `(dν/dB₀` in kHz/µT, `d²ν/dB₀²` in kHz/µT²`)`.
pub fn clock_sensitivity(
    sys: &SpinSystem,
    transition: Transition,
    b0_ut: f64,
) -> Result<(f64, f64), SpinError> {
    sys.validate()?;
    if !b0_ut.is_finite() {
        return Err(SpinError::InvalidInput("non-finite field".into()));
    }
    let h_mt = 1e-4 * sys.hyperfine_a / sys.gamma_sum();
    let b_mt = b0_ut / UT_PER_MT;
    let nu = |b: f64| {
        let l = breit_rabi_signed_mt(sys, b);
        l.energy(transition.upper()) - l.s
    };
    let (lo, mid, hi) = (nu(b_mt - h_mt), nu(b_mt), nu(b_mt + h_mt));
    // MHz/mT == kHz/µT; MHz/mT² == 1e-3 kHz/µT².
    let d1 = (hi - lo) / (2.0 * h_mt);
    let d2 = (hi - 2.0 * mid + lo) / (h_mt * h_mt) * 1e-3;
    Ok((d1, d2))
}

/// Field magnitude (µT) reproducing a measured S→T+ / S→T− peak separation (kHz).
pub fn estimate_field_from_splitting(delta_f_khz: f64, sys: &SpinSystem) -> Result<f64, SpinError> {
    sys.validate()?;
    if !(delta_f_khz.is_finite() && delta_f_khz >= 0.0) {
        return Err(SpinError::InvalidInput(format!(
            "splitting must be finite and non-negative, got {delta_f_khz}"
        )));
    }
    Ok(delta_f_khz / sys.gamma_diff())
}

/// Rotation matrix taking ẑ onto `n`.
pub fn rotation_to(n: &Vector3<f64>) -> Matrix3<f64> {
    let z = Vector3::z();
    let axis = z.cross(n);
    let s = axis.norm();
    let cth = z.dot(n);
    if s < 1e-15 {
        return if cth > 0.0 {
            Matrix3::identity()
        } else {
            Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0))
        };
    }
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), s.atan2(cth))
        .into_inner()
}
