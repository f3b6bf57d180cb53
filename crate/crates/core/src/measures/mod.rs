//! Model-quality measures: the disentanglement measure of the final FC
//! layer, per-class F-measures, the FD aggregate, model selection and the
//! two-model ensemble.

mod ledger;

pub use ledger::{LedgerRecord, ModelFamilyLedger, ParseLedgerError};

use thiserror::Error;

use crate::linalg::{self, EigenSystem, LinalgError, Matrix};
use crate::score::ScoreClass;

/// Default weights for F_all and D in the FD aggregate.
pub const FD_WEIGHT_F: f64 = 0.5;
pub const FD_WEIGHT_D: f64 = 0.5;
/// Default FD threshold for accepting the F_all-optimal model.
pub const DEFAULT_FD_THRESHOLD: f64 = 0.95;

/// Eigenvalues at or below this are treated as absent factors.
const FACTOR_EPS: f64 = 1e-10;
/// Eigenvalues below `-NEGATIVE_EIG_TOL` indicate a non-correlation input.
const NEGATIVE_EIG_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("eigenvalue {0:e} is negative; input is not a correlation matrix")]
    NegativeEigenvalue(f64),
    #[error("node index {index} out of range for {nodes} nodes")]
    IndexOutOfRange { index: usize, nodes: usize },
    #[error("D-measure needs at least 2 output nodes, got {0}")]
    SingleNode(usize),
    #[error("confusion matrix is empty")]
    EmptyConfusion,
    #[error("confusion matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("{0} values are all zero; cannot normalize")]
    AllZero(&'static str),
    #[error("invalid measure input: {0}")]
    InvalidInput(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("ledger has no records")]
    EmptyLedger,
}

/// Factor loadings `fl[m][j] = sqrt(eig_m) * v_m[j]` for every factor with
/// a positive eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorDecomposition {
    /// `M x J`; row `m` holds the loadings of factor `m` on each node.
    pub loadings: Matrix,
    pub factor_count: usize,
    pub source: EigenSystem,
}

impl FactorDecomposition {
    pub fn nodes(&self) -> usize {
        self.loadings.cols()
    }
}

pub fn factor_loadings(eig: &EigenSystem) -> Result<FactorDecomposition, MeasureError> {
    if let Some(&bad) = eig.values.iter().find(|&&v| v < -NEGATIVE_EIG_TOL) {
        return Err(MeasureError::NegativeEigenvalue(bad));
    }
    let nodes = eig.vectors.rows();
    let kept: Vec<usize> = (0..eig.values.len()).filter(|&m| eig.values[m] > FACTOR_EPS).collect();
    // A zero matrix has no factors; keep one all-zero row so the shape stays valid.
    let rows = kept.len().max(1);
    let mut loadings = Matrix::zeros(rows, nodes);
    for (row, &m) in kept.iter().enumerate() {
        let root = eig.values[m].sqrt();
        for j in 0..nodes {
            loadings[(row, j)] = root * eig.vectors[(j, m)];
        }
    }
    Ok(FactorDecomposition { loadings, factor_count: kept.len(), source: eig.clone() })
}

/// Euclidean distance between the loading columns of nodes `j1` and `j2`.
pub fn pairwise_factor_distance(fd: &FactorDecomposition, j1: usize, j2: usize) -> Result<f64, MeasureError> {
    let nodes = fd.nodes();
    for index in [j1, j2] {
        if index >= nodes {
            return Err(MeasureError::IndexOutOfRange { index, nodes });
        }
    }
    let l = &fd.loadings;
    Ok((0..l.rows()).map(|m| (l[(m, j1)] - l[(m, j2)]).powi(2)).sum::<f64>().sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisentanglementResult {
    /// `J x J` symmetric distance table with a zero diagonal.
    pub pairwise: Matrix,
    /// Distance from each node to its nearest other node.
    pub per_node_min: Vec<f64>,
    pub d_measure: f64,
    pub factors: FactorDecomposition,
}

/// D-measure of a final-layer weight matrix `W` (`I` inputs by `J` output
/// nodes): mean over nodes of the distance to the nearest other node in
/// factor-loading space.
pub fn d_measure(w: &Matrix) -> Result<DisentanglementResult, MeasureError> {
    let nodes = w.cols();
    if nodes < 2 {
        return Err(MeasureError::SingleNode(nodes));
    }
    let standardized = linalg::zscore_columns(w)?;
    let r = linalg::correlation_matrix(&standardized)?;
    let eig = linalg::sym_eig(&r)?;
    let factors = factor_loadings(&eig)?;

    let mut pairwise = Matrix::zeros(nodes, nodes);
    for a in 0..nodes {
        for b in (a + 1)..nodes {
            let d = pairwise_factor_distance(&factors, a, b)?;
            pairwise[(a, b)] = d;
            pairwise[(b, a)] = d;
        }
    }
    let per_node_min: Vec<f64> = (0..nodes)
        .map(|j| (0..nodes).filter(|&jj| jj != j).map(|jj| pairwise[(j, jj)]).fold(f64::INFINITY, f64::min))
        .collect();
    let d = per_node_min.iter().sum::<f64>() / nodes as f64;
    Ok(DisentanglementResult { pairwise, per_node_min, d_measure: d, factors })
}

/// Square count table, rows are true classes and columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    size: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(size: usize) -> Self {
        Self { size, counts: vec![0; size * size] }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self, MeasureError> {
        let size = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != size) {
            return Err(MeasureError::NotSquare { rows: size, cols: r.len() });
        }
        Ok(Self { size, counts: rows.concat() })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.size + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.size + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.size).map(|p| self.get(truth, p)).sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.size).map(|t| self.get(t, predicted)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub confusion: ConfusionMatrix,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub per_class_f: Vec<f64>,
    /// Sum of the per-class F-measures (not averaged).
    pub f_all_raw: f64,
}

impl ClassMetrics {
    /// Mean F over the given class indices.
    pub fn mean_f_over(&self, classes: &[usize]) -> f64 {
        if classes.is_empty() {
            return 0.0;
        }
        classes.iter().map(|&c| self.per_class_f[c]).sum::<f64>() / classes.len() as f64
    }
}

/// Per-class F-measure (harmonic mean of precision and recall). A class whose
/// precision and recall are both zero, or undefined, scores 0.
pub fn f_measures(confusion: &ConfusionMatrix) -> Result<ClassMetrics, MeasureError> {
    if confusion.size() == 0 || confusion.total() == 0 {
        return Err(MeasureError::EmptyConfusion);
    }
    let n = confusion.size();
    let mut precision = vec![0.0; n];
    let mut recall = vec![0.0; n];
    let mut per_class_f = vec![0.0; n];
    for j in 0..n {
        let tp = confusion.get(j, j) as f64;
        let predicted = confusion.col_sum(j) as f64;
        let actual = confusion.row_sum(j) as f64;
        let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let r = if actual > 0.0 { tp / actual } else { 0.0 };
        precision[j] = p;
        recall[j] = r;
        per_class_f[j] = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    let f_all_raw = per_class_f.iter().sum();
    Ok(ClassMetrics { confusion: confusion.clone(), precision, recall, per_class_f, f_all_raw })
}

/// Family-normalized scores. Each list is divided by its maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct FdScores {
    pub f_hat: Vec<f64>,
    pub d_hat: Vec<f64>,
    pub fd: Vec<f64>,
}

pub fn fd_scores(f_all: &[f64], d: &[f64]) -> Result<FdScores, MeasureError> {
    fd_scores_weighted(f_all, d, FD_WEIGHT_F, FD_WEIGHT_D)
}

pub fn fd_scores_weighted(f_all: &[f64], d: &[f64], w1: f64, w2: f64) -> Result<FdScores, MeasureError> {
    if f_all.len() != d.len() {
        return Err(MeasureError::LengthMismatch(f_all.len(), d.len()));
    }
    if f_all.is_empty() {
        return Err(MeasureError::EmptyLedger);
    }
    let normalize = |xs: &[f64], what: &'static str| -> Result<Vec<f64>, MeasureError> {
        if let Some(bad) = xs.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(MeasureError::InvalidInput(format!("{what} value {bad} must be finite and >= 0")));
        }
        let max = xs.iter().cloned().fold(0.0, f64::max);
        if max <= 0.0 {
            return Err(MeasureError::AllZero(what));
        }
        Ok(xs.iter().map(|x| x / max).collect())
    };
    let f_hat = normalize(f_all, "F_all")?;
    let d_hat = normalize(d, "D-measure")?;
    let fd = f_hat.iter().zip(&d_hat).map(|(f, d)| w1 * f + w2 * d).collect();
    Ok(FdScores { f_hat, d_hat, fd })
}

/// First index of the maximum (ties resolve to the lowest index).
pub fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in xs.iter().enumerate() {
        match best {
            Some(b) if x <= xs[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Result of picking the optimal model from a re-trained family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    /// The F_all-maximal model also clears the FD threshold.
    Optimal { index: usize, fd: f64, by_f: usize, by_d: usize, by_fd: usize },
    /// The F_all-maximal model's FD does not exceed the threshold.
    NotConverged { by_f: usize, by_d: usize, by_fd: usize, fd_at_by_f: f64 },
}

impl Selection {
    pub fn optimal(&self) -> Option<usize> {
        match *self {
            Selection::Optimal { index, .. } => Some(index),
            Selection::NotConverged { .. } => None,
        }
    }

    pub fn by_f(&self) -> usize {
        match *self {
            Selection::Optimal { by_f, .. } | Selection::NotConverged { by_f, .. } => by_f,
        }
    }

    pub fn by_d(&self) -> usize {
        match *self {
            Selection::Optimal { by_d, .. } | Selection::NotConverged { by_d, .. } => by_d,
        }
    }

    pub fn by_fd(&self) -> usize {
        match *self {
            Selection::Optimal { by_fd, .. } | Selection::NotConverged { by_fd, .. } => by_fd,
        }
    }
}

/// Applies the selection rule to already-normalized scores.
pub fn select_from_scores(scores: &FdScores, threshold: f64) -> Result<Selection, MeasureError> {
    let by_f = argmax(&scores.f_hat).ok_or(MeasureError::EmptyLedger)?;
    let by_d = argmax(&scores.d_hat).ok_or(MeasureError::EmptyLedger)?;
    let by_fd = argmax(&scores.fd).ok_or(MeasureError::EmptyLedger)?;
    let fd = scores.fd[by_f];
    Ok(if fd > threshold {
        Selection::Optimal { index: by_f, fd, by_f, by_d, by_fd }
    } else {
        Selection::NotConverged { by_f, by_d, by_fd, fd_at_by_f: fd }
    })
}

pub fn select_optimal(ledger: &ModelFamilyLedger) -> Result<Selection, MeasureError> {
    if ledger.records.is_empty() {
        return Err(MeasureError::EmptyLedger);
    }
    let scores = FdScores {
        f_hat: ledger.records.iter().map(|r| r.f_hat).collect(),
        d_hat: ledger.records.iter().map(|r| r.d_hat).collect(),
        fd: ledger.records.iter().map(|r| r.fd).collect(),
    };
    select_from_scores(&scores, ledger.threshold)
}

/// Blends two models' class-probability vectors with equal weight and returns
/// the score class at the maximum.
pub fn ensemble_predict(p_f: &[f64], p_d: &[f64]) -> Result<ScoreClass, MeasureError> {
    if p_f.len() != p_d.len() {
        return Err(MeasureError::LengthMismatch(p_f.len(), p_d.len()));
    }
    if p_f.len() != crate::score::NUM_CLASSES {
        return Err(MeasureError::InvalidInput(format!(
            "expected {} class probabilities, got {}",
            crate::score::NUM_CLASSES,
            p_f.len()
        )));
    }
    let blended: Vec<f64> = p_f.iter().zip(p_d).map(|(a, b)| FD_WEIGHT_F * a + FD_WEIGHT_D * b).collect();
    let idx = argmax(&blended).expect("non-empty");
    Ok(ScoreClass::from_index(idx).expect("index within class range"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn loadings_direct_substitution() {
        let eig = EigenSystem { values: vec![4.0, 0.0], vectors: Matrix::identity(2) };
        let fd = factor_loadings(&eig).unwrap();
        assert_eq!(fd.factor_count, 1);
        assert_eq!(fd.loadings.rows(), 1);
        assert_eq!(fd.loadings.data(), &[2.0, 0.0]);
    }

    #[test]
    fn loadings_of_rank_one_correlation() {
        let r = Matrix::new(2, 2, vec![1.0, -1.0, -1.0, 1.0]).unwrap();
        let fd = factor_loadings(&linalg::sym_eig(&r).unwrap()).unwrap();
        assert_eq!(fd.factor_count, 1);
        let row = fd.loadings.data();
        assert!(close(row[0].abs(), 1.0, 1e-12) && close(row[0], -row[1], 1e-12));
    }

    #[test]
    fn loadings_reject_negative_eigenvalue() {
        let eig = EigenSystem { values: vec![1.0, -0.5], vectors: Matrix::identity(2) };
        assert_eq!(factor_loadings(&eig), Err(MeasureError::NegativeEigenvalue(-0.5)));
    }

    #[test]
    fn pairwise_distance_cases() {
        let r = Matrix::new(2, 2, vec![1.0, -1.0, -1.0, 1.0]).unwrap();
        let fd = factor_loadings(&linalg::sym_eig(&r).unwrap()).unwrap();
        assert_eq!(pairwise_factor_distance(&fd, 1, 1).unwrap(), 0.0);
        assert!(close(pairwise_factor_distance(&fd, 0, 1).unwrap(), 2.0, 1e-12));

        let fd = factor_loadings(&linalg::sym_eig(&Matrix::identity(2)).unwrap()).unwrap();
        assert!(close(pairwise_factor_distance(&fd, 0, 1).unwrap(), 2f64.sqrt(), 1e-12));
        assert_eq!(pairwise_factor_distance(&fd, 0, 2), Err(MeasureError::IndexOutOfRange { index: 2, nodes: 2 }));
    }

    #[test]
    fn d_measure_examples() {
        let w = Matrix::from_columns(&[vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]]).unwrap();
        assert!(close(d_measure(&w).unwrap().d_measure, 2.0, 1e-12));

        let w = Matrix::from_columns(&[vec![1.0, 4.0, 2.0], vec![1.0, 4.0, 2.0]]).unwrap();
        assert!(close(d_measure(&w).unwrap().d_measure, 0.0, 1e-7));

        let s = 3f64.sqrt();
        let w = Matrix::from_columns(&[vec![-1.0, 0.0, 1.0], vec![1.0 / s, -2.0 / s, 1.0 / s]]).unwrap();
        assert!(close(d_measure(&w).unwrap().d_measure, 2f64.sqrt(), 1e-12));
    }

    #[test]
    fn d_measure_needs_two_nodes() {
        let w = Matrix::from_columns(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(d_measure(&w).unwrap_err(), MeasureError::SingleNode(1));
        let w = Matrix::from_columns(&[vec![1.0, 2.0, 3.0], vec![2.0, 2.0, 2.0]]).unwrap();
        assert_eq!(d_measure(&w).unwrap_err(), MeasureError::Linalg(LinalgError::ConstantColumn(1)));
    }

    #[test]
    fn f_measure_examples() {
        let mut perfect = ConfusionMatrix::new(8);
        for c in 0..8 {
            perfect.add(c, c);
            perfect.add(c, c);
        }
        let m = f_measures(&perfect).unwrap();
        assert!(m.per_class_f.iter().all(|&f| f == 1.0));
        assert_eq!(m.f_all_raw, 8.0);

        let half = ConfusionMatrix::from_rows(&[vec![1, 1], vec![1, 1]]).unwrap();
        let m = f_measures(&half).unwrap();
        assert_eq!(m.per_class_f, vec![0.5, 0.5]);
        assert_eq!(m.f_all_raw, 1.0);

        let absent = ConfusionMatrix::from_rows(&[vec![3, 0], vec![0, 0]]).unwrap();
        let m = f_measures(&absent).unwrap();
        assert_eq!(m.per_class_f, vec![1.0, 0.0]);

        assert_eq!(f_measures(&ConfusionMatrix::new(3)), Err(MeasureError::EmptyConfusion));
    }

    #[test]
    fn fd_examples() {
        let s = fd_scores(&[0.5, 1.0], &[1.0, 0.8]).unwrap();
        assert_eq!(s.fd, vec![0.75, 0.9]);
        let s = fd_scores(&[3.2], &[0.7]).unwrap();
        assert_eq!((s.f_hat[0], s.d_hat[0], s.fd[0]), (1.0, 1.0, 1.0));
        let s = fd_scores(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(s.fd, vec![1.0, 1.0]);
        assert_eq!(fd_scores(&[0.0, 0.0], &[1.0, 1.0]), Err(MeasureError::AllZero("F_all")));
        assert!(fd_scores(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn selection_examples() {
        let scores = FdScores { f_hat: vec![0.9, 1.0], d_hat: vec![1.0, 0.95], fd: vec![0.95, 0.975] };
        let sel = select_from_scores(&scores, 0.95).unwrap();
        assert_eq!(sel.optimal(), Some(1));

        let scores = FdScores { f_hat: vec![1.0, 0.6], d_hat: vec![0.5, 1.0], fd: vec![0.75, 0.8] };
        let sel = select_from_scores(&scores, 0.95).unwrap();
        assert!(matches!(sel, Selection::NotConverged { by_f: 0, by_d: 1, by_fd: 1, .. }));
        assert_eq!(select_from_scores(&scores, 0.0).unwrap().optimal(), Some(0));
    }

    #[test]
    fn argmax_ties_take_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn ensemble_examples() {
        let mut pf = vec![0.0; 8];
        let mut pd = vec![0.0; 8];
        pf[0] = 0.9;
        pf[1] = 0.1;
        pd[0] = 0.2;
        pd[1] = 0.8;
        assert_eq!(ensemble_predict(&pf, &pd).unwrap().score(), 2);

        let mut onehot = vec![0.0; 8];
        onehot[5] = 1.0;
        assert_eq!(ensemble_predict(&onehot, &onehot).unwrap().score(), 7);
        assert_eq!(ensemble_predict(&onehot, &[0.0; 7]), Err(MeasureError::LengthMismatch(8, 7)));

        let tie = vec![0.125; 8];
        assert_eq!(ensemble_predict(&tie, &tie).unwrap().score(), 2);
    }
}
