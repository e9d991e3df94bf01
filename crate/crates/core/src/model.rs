//! Restricted Hilbert space, bus Hamiltonian and collapse operators.
//!
//! Basis ordering: index 0 is `|G>` (no excitation), indices `1..=N` are the
//! single-qubit excitations, index `N + 1` is the bus excitation `|a>`.
//! `|G>` is the destination of every decay channel.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::CMatrix;

pub const GROUND: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisLabel {
    Ground,
    Qubit(usize),
    Bus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BasisIndex {
    n_qubits: usize,
}

impl BasisIndex {
    pub fn new(n_qubits: usize) -> Self {
        Self { n_qubits }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn size(&self) -> usize {
        self.n_qubits + 2
    }

    pub fn bus(&self) -> usize {
        self.n_qubits + 1
    }

    pub fn index(&self, label: BasisLabel) -> Option<usize> {
        match label {
            BasisLabel::Ground => Some(GROUND),
            BasisLabel::Qubit(j) if (1..=self.n_qubits).contains(&j) => Some(j),
            BasisLabel::Qubit(_) => None,
            BasisLabel::Bus => Some(self.bus()),
        }
    }

    pub fn label(&self, index: usize) -> Option<BasisLabel> {
        match index {
            GROUND => Some(BasisLabel::Ground),
            i if i <= self.n_qubits => Some(BasisLabel::Qubit(i)),
            i if i == self.bus() => Some(BasisLabel::Bus),
            _ => None,
        }
    }

    /// Column names used in trajectory exports.
    pub fn column_names(&self) -> Vec<String> {
        let mut out = vec!["pop_G".to_string()];
        out.extend((1..=self.n_qubits).map(|j| format!("pop_{j}")));
        out.push("pop_a".into());
        out
    }
}

/// Decay and dephasing rates (angular frequency).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub decay_qubit: Vec<f64>,
    pub dephase_qubit: Vec<f64>,
    pub decay_bus: f64,
    pub dephase_bus: f64,
}

impl NoiseModel {
    pub fn noiseless(n_qubits: usize) -> Self {
        Self::uniform(n_qubits, 0.0)
    }

    /// The same rate on all four channel types.
    pub fn uniform(n_qubits: usize, rate: f64) -> Self {
        Self {
            decay_qubit: vec![rate; n_qubits],
            dephase_qubit: vec![rate; n_qubits],
            decay_bus: rate,
            dephase_bus: rate,
        }
    }

    /// Qubit channels at `qubit_rate`, bus channels at `bus_rate`.
    pub fn split(n_qubits: usize, qubit_rate: f64, bus_rate: f64) -> Self {
        Self {
            decay_qubit: vec![qubit_rate; n_qubits],
            dephase_qubit: vec![qubit_rate; n_qubits],
            decay_bus: bus_rate,
            dephase_bus: bus_rate,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.decay_qubit.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dephase_qubit.len() != self.decay_qubit.len() {
            return Err(Error::Dimension {
                expected: self.decay_qubit.len(),
                got: self.dephase_qubit.len(),
            });
        }
        let all = self
            .decay_qubit
            .iter()
            .chain(&self.dephase_qubit)
            .chain([&self.decay_bus, &self.dephase_bus]);
        for &r in all {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidSpec(format!("decoherence rate {r} must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.decay_qubit
            .iter()
            .chain(&self.dephase_qubit)
            .chain([&self.decay_bus, &self.dephase_bus])
            .all(|&r| r == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            decay_qubit: self.decay_qubit.iter().map(|r| r * factor).collect(),
            dephase_qubit: self.dephase_qubit.iter().map(|r| r * factor).collect(),
            decay_bus: self.decay_bus * factor,
            dephase_bus: self.dephase_bus * factor,
        }
    }
}

/// Static control errors: amplitude deviation and qubit frequency drift.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorModel {
    pub epsilon: f64,
    pub delta: f64,
}

/// `H = (1 + eps) sum_j g_j (|j><a| + |a><j|) + delta sum_j |j><j|`.
pub fn hamiltonian(couplings: &[f64], error: &ErrorModel) -> Result<CMatrix> {
    let dim = couplings.len() + 2;
    let mut h = CMatrix::zeros(dim, dim);
    fill_hamiltonian(&mut h, couplings, error)?;
    Ok(h)
}

pub fn fill_hamiltonian(h: &mut CMatrix, couplings: &[f64], error: &ErrorModel) -> Result<()> {
    let n = couplings.len();
    let dim = n + 2;
    if h.nrows() != dim || h.ncols() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: h.nrows(),
        });
    }
    h.fill(C64::new(0.0, 0.0));
    let bus = n + 1;
    let scale = 1.0 + error.epsilon;
    for (j, &g) in couplings.iter().enumerate() {
        let q = j + 1;
        let v = C64::new(scale * g, 0.0);
        h[(q, bus)] = v;
        h[(bus, q)] = v;
        h[(q, q)] = C64::new(error.delta, 0.0);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CollapseKind {
    /// `|G><from|`.
    Lowering { from: usize },
    /// `I - 2|k><k|`, i.e. `sigma_z` of excitation `k` restricted to the basis.
    Dephasing { index: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollapseOperator {
    pub rate: f64,
    pub kind: CollapseKind,
}

impl CollapseOperator {
    pub fn matrix(&self, dim: usize) -> CMatrix {
        let one = C64::new(1.0, 0.0);
        match self.kind {
            CollapseKind::Lowering { from } => {
                let mut m = CMatrix::zeros(dim, dim);
                m[(GROUND, from)] = one;
                m
            }
            CollapseKind::Dephasing { index } => {
                let mut m = CMatrix::identity(dim, dim);
                m[(index, index)] = -one;
                m
            }
        }
    }

    /// Adds `rate * (D rho D^dag - {D^dag D, rho} / 2)` to `out`.
    pub fn accumulate(&self, rho: &CMatrix, out: &mut CMatrix) {
        if self.rate == 0.0 {
            return;
        }
        let dim = rho.nrows();
        let r = self.rate;
        match self.kind {
            CollapseKind::Lowering { from: k } => {
                out[(GROUND, GROUND)] += rho[(k, k)] * r;
                let half = 0.5 * r;
                for j in 0..dim {
                    out[(k, j)] -= rho[(k, j)] * half;
                    out[(j, k)] -= rho[(j, k)] * half;
                }
            }
            CollapseKind::Dephasing { index: k } => {
                // sigma rho sigma - rho: only entries in row or column k (not both) flip sign.
                for j in 0..dim {
                    if j != k {
                        out[(k, j)] -= rho[(k, j)] * (2.0 * r);
                        out[(j, k)] -= rho[(j, k)] * (2.0 * r);
                    }
                }
            }
        }
    }
}

/// One decay and one dephasing channel per qubit, then the bus pair.
/// Zero-rate channels are kept so the list layout is fixed.
pub fn collapse_operators(noise: &NoiseModel, basis: &BasisIndex) -> Result<Vec<CollapseOperator>> {
    noise.validate()?;
    if noise.n_qubits() != basis.n_qubits() {
        return Err(Error::Dimension {
            expected: basis.n_qubits(),
            got: noise.n_qubits(),
        });
    }
    let mut ops = Vec::with_capacity(2 * basis.n_qubits() + 2);
    for k in 1..=basis.n_qubits() {
        ops.push(CollapseOperator {
            rate: noise.decay_qubit[k - 1],
            kind: CollapseKind::Lowering { from: k },
        });
        ops.push(CollapseOperator {
            rate: noise.dephase_qubit[k - 1],
            kind: CollapseKind::Dephasing { index: k },
        });
    }
    let bus = basis.bus();
    ops.push(CollapseOperator {
        rate: noise.decay_bus,
        kind: CollapseKind::Lowering { from: bus },
    });
    ops.push(CollapseOperator {
        rate: noise.dephase_bus,
        kind: CollapseKind::Dephasing { index: bus },
    });
    Ok(ops)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_dissipator(op: &CollapseOperator, rho: &CMatrix) -> CMatrix {
        let d = op.matrix(rho.nrows());
        let dd = d.adjoint() * &d;
        (&d * rho * d.adjoint() - (&dd * rho + rho * &dd) * C64::new(0.5, 0.0)) * C64::new(op.rate, 0.0)
    }

    fn sample_rho(dim: usize) -> CMatrix {
        let mut a = CMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                a[(i, j)] = C64::new((i * 7 + j * 3) as f64 % 5.0 - 2.0, (i + 2 * j) as f64 % 3.0 - 1.0);
            }
        }
        let rho = &a * a.adjoint();
        let tr = rho.trace();
        rho / tr
    }

    #[test]
    fn zero_couplings_give_zero_matrix() {
        let h = hamiltonian(&[0.0; 3], &ErrorModel::default()).unwrap();
        assert!(h.iter().all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn three_qubit_pattern() {
        let h = hamiltonian(&[0.3, -0.4, 0.5], &ErrorModel::default()).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expected = match (i, j) {
                    (q @ 1..=3, 4) | (4, q @ 1..=3) => [0.3, -0.4, 0.5][q - 1],
                    _ => 0.0,
                };
                assert_eq!(h[(i, j)], C64::new(expected, 0.0), "({i},{j})");
            }
        }
    }

    #[test]
    fn errors_scale_and_shift() {
        let g = [0.3, -0.4, 0.5];
        let base = hamiltonian(&g, &ErrorModel::default()).unwrap();
        let h = hamiltonian(&g, &ErrorModel { epsilon: 0.1, delta: 0.07 }).unwrap();
        for q in 1..=3 {
            assert!((h[(q, 4)] - base[(q, 4)] * 1.1).norm() < 1e-15);
            assert_eq!(h[(q, q)], C64::new(0.07, 0.0));
        }
        assert_eq!(h[(4, 4)], C64::new(0.0, 0.0));
        assert_eq!(h[(0, 0)], C64::new(0.0, 0.0));
    }

    #[test]
    fn hamiltonian_is_hermitian_and_never_touches_ground() {
        let h = hamiltonian(&[1.0, -2.0, 0.25, 4.0], &ErrorModel { epsilon: -0.3, delta: 0.9 }).unwrap();
        assert_eq!(h, h.adjoint());
        for j in 0..6 {
            assert_eq!(h[(0, j)], C64::new(0.0, 0.0));
            assert_eq!(h[(j, 0)], C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn fill_rejects_wrong_dimension() {
        let mut h = CMatrix::zeros(4, 4);
        assert!(fill_hamiltonian(&mut h, &[1.0, 2.0, 3.0], &ErrorModel::default()).is_err());
    }

    #[test]
    fn operator_count_and_forms() {
        let ops = collapse_operators(&NoiseModel::uniform(3, 1e-3), &BasisIndex::new(3)).unwrap();
        assert_eq!(ops.len(), 8);
        let lowering = ops.iter().filter(|o| matches!(o.kind, CollapseKind::Lowering { .. })).count();
        assert_eq!(lowering, 4);

        let ops = collapse_operators(&NoiseModel::uniform(2, 1.0), &BasisIndex::new(2)).unwrap();
        let z1 = ops[1].matrix(4);
        let diag: Vec<f64> = (0..4).map(|i| z1[(i, i)].re).collect();
        assert_eq!(diag, vec![1.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn operator_algebra() {
        let ops = collapse_operators(&NoiseModel::uniform(3, 1.0), &BasisIndex::new(3)).unwrap();
        let id = CMatrix::identity(5, 5);
        for op in ops {
            let m = op.matrix(5);
            match op.kind {
                CollapseKind::Lowering { .. } => assert_eq!(&m * &m, CMatrix::zeros(5, 5)),
                CollapseKind::Dephasing { .. } => {
                    assert_eq!(m, m.adjoint());
                    assert_eq!(&m * m.adjoint(), id);
                }
            }
        }
    }

    #[test]
    fn structured_dissipator_matches_dense_form() {
        let rho = sample_rho(6);
        let noise = NoiseModel {
            decay_qubit: vec![0.1, 0.2, 0.3, 0.4],
            dephase_qubit: vec![0.5, 0.6, 0.7, 0.8],
            decay_bus: 0.9,
            dephase_bus: 1.1,
        };
        for op in collapse_operators(&noise, &BasisIndex::new(4)).unwrap() {
            let mut fast = CMatrix::zeros(6, 6);
            op.accumulate(&rho, &mut fast);
            let dense = dense_dissipator(&op, &rho);
            assert!((fast - dense).camax() < 1e-14, "{op:?}");
        }
    }

    #[test]
    fn zero_rates_contribute_nothing() {
        let rho = sample_rho(5);
        let mut out = CMatrix::zeros(5, 5);
        for op in collapse_operators(&NoiseModel::noiseless(3), &BasisIndex::new(3)).unwrap() {
            op.accumulate(&rho, &mut out);
        }
        assert_eq!(out, CMatrix::zeros(5, 5));
    }

    #[test]
    fn negative_rate_rejected() {
        let mut noise = NoiseModel::uniform(3, 0.1);
        noise.decay_bus = -1.0;
        assert!(collapse_operators(&noise, &BasisIndex::new(3)).is_err());
    }

    #[test]
    fn basis_labels_round_trip() {
        let b = BasisIndex::new(4);
        for i in 0..b.size() {
            assert_eq!(b.index(b.label(i).unwrap()), Some(i));
        }
        assert_eq!(b.label(6), None);
        assert_eq!(b.index(BasisLabel::Qubit(5)), None);
        assert_eq!(b.column_names().len(), 6);
    }
}
