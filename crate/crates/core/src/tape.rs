//! Reverse-mode gradient tape over matrix primitives.
//!
//! Operations record their inputs on a linear tape during the forward pass;
//! [`GradTape::backward`] then walks the tape in exact reverse order and
//! accumulates vector-Jacobian products. Gradients add up when a variable is
//! used more than once, which is what lets prototypes and the distance scale
//! be trained like any other weight.
//!
//! A tape is single-threaded: build the graph, call `backward`, read the
//! gradients, drop it. Broadcasting is limited to row and column vectors so
//! every primitive stays small enough to check by finite differences.

use std::cell::{Cell, RefCell};

use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};

/// Handle to a node on a [`GradTape`]. Only valid for the tape that issued it.
#[derive(Clone, Copy, Debug)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(usize, usize),
    /// `a * b^T`
    MatMulNT(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    MulElem(usize, usize),
    /// matrix plus `1 x n` row vector
    AddRow(usize, usize),
    /// matrix plus `m x 1` column vector
    AddCol(usize, usize),
    Scale(usize, f64),
    AddConst(usize),
    /// matrix times a `1 x 1` variable
    ScaleByVar(usize, usize),
    /// elementwise product with a constant matrix (no gradient through it)
    MulConst(usize, Matrix),
    Abs(usize),
    Relu(usize),
    Tanh(usize),
    Sqrt(usize),
    Log(usize),
    ClampMin(usize, f64),
    SoftmaxRows(usize),
    RowSum(usize),
    RowMean(usize),
    MeanAll(usize),
    PairwiseEuclidean(usize, usize),
    NormalizeRows(usize),
    Gather(usize, Vec<usize>),
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Ordered record of primitive operations with enough saved state to run
/// vector-Jacobian products backward.
pub struct GradTape {
    nodes: RefCell<Vec<Node>>,
    floor_hits: Cell<u64>,
}

impl Default for GradTape {
    fn default() -> Self {
        Self::new()
    }
}

impl GradTape {
    pub fn new() -> Self {
        GradTape {
            nodes: RefCell::new(Vec::new()),
            floor_hits: Cell::new(0),
        }
    }

    /// Number of entries clamped by [`GradTape::clamp_min`] so far.
    /// The training loss floors probabilities before taking logs; this
    /// counter feeds the abort diagnostics.
    pub fn floor_hits(&self) -> u64 {
        self.floor_hits.get()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Matrix, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var(nodes.len() - 1)
    }

    fn with_value<T>(&self, v: Var, f: impl FnOnce(&Matrix) -> T) -> T {
        f(&self.nodes.borrow()[v.0].value)
    }

    pub fn value(&self, v: Var) -> Matrix {
        self.with_value(v, Matrix::clone)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.with_value(v, Matrix::shape)
    }

    /// Records an input or parameter.
    pub fn leaf(&self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            matrix::matmul(&nodes[a.0].value, &nodes[b.0].value)
        };
        self.push(value, Op::MatMul(a.0, b.0))
    }

    /// `a * b^T`; the head stores class weights and prototypes as `N x F` rows.
    pub fn matmul_nt(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            matrix::matmul_nt(&nodes[a.0].value, &nodes[b.0].value)
        };
        self.push(value, Op::MatMulNT(a.0, b.0))
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            matrix::add(&nodes[a.0].value, &nodes[b.0].value)
        };
        self.push(value, Op::Add(a.0, b.0))
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            matrix::sub(&nodes[a.0].value, &nodes[b.0].value)
        };
        self.push(value, Op::Sub(a.0, b.0))
    }

    pub fn mul_elem(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            matrix::mul_elem(&nodes[a.0].value, &nodes[b.0].value)
        };
        self.push(value, Op::MulElem(a.0, b.0))
    }

    pub fn add_row_broadcast(&self, a: Var, row: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            matrix::add_row_broadcast(&nodes[a.0].value, &nodes[row.0].value)
        };
        self.push(value, Op::AddRow(a.0, row.0))
    }

    pub fn add_col_broadcast(&self, a: Var, col: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            matrix::add_col_broadcast(&nodes[a.0].value, &nodes[col.0].value)
        };
        self.push(value, Op::AddCol(a.0, col.0))
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        let value = self.with_value(a, |m| matrix::scale(m, c));
        self.push(value, Op::Scale(a.0, c))
    }

    pub fn add_const(&self, a: Var, c: f64) -> Var {
        let value = self.with_value(a, |m| matrix::add_scalar(m, c));
        self.push(value, Op::AddConst(a.0))
    }

    pub fn scale_by_var(&self, a: Var, s: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let sv = nodes[s.0].value.scalar_value();
            matrix::scale(&nodes[a.0].value, sv)
        };
        self.push(value, Op::ScaleByVar(a.0, s.0))
    }

    pub fn mul_const(&self, a: Var, weights: &Matrix) -> Var {
        let value = self.with_value(a, |m| matrix::mul_elem(m, weights));
        self.push(value, Op::MulConst(a.0, weights.clone()))
    }

    pub fn abs(&self, a: Var) -> Var {
        let value = self.with_value(a, matrix::abs_elem);
        self.push(value, Op::Abs(a.0))
    }

    pub fn relu(&self, a: Var) -> Var {
        let value = self.with_value(a, matrix::relu);
        self.push(value, Op::Relu(a.0))
    }

    pub fn tanh(&self, a: Var) -> Var {
        let value = self.with_value(a, matrix::tanh);
        self.push(value, Op::Tanh(a.0))
    }

    /// Elementwise square root; input entries must be positive.
    pub fn sqrt(&self, a: Var) -> Var {
        let value = self.with_value(a, matrix::sqrt_elem);
        self.push(value, Op::Sqrt(a.0))
    }

    /// Elementwise natural log; input entries must be positive (the loss
    /// paths clamp first).
    pub fn log(&self, a: Var) -> Var {
        let value = self.with_value(a, matrix::log_elem);
        self.push(value, Op::Log(a.0))
    }

    pub fn clamp_min(&self, a: Var, floor: f64) -> Var {
        let (value, hits) = self.with_value(a, |m| matrix::clamp_min(m, floor));
        self.floor_hits.set(self.floor_hits.get() + hits);
        self.push(value, Op::ClampMin(a.0, floor))
    }

    pub fn softmax_rows(&self, a: Var) -> Var {
        let value = self.with_value(a, matrix::stable_softmax);
        self.push(value, Op::SoftmaxRows(a.0))
    }

    pub fn row_sum(&self, a: Var) -> Var {
        let value = self.with_value(a, matrix::row_sum);
        self.push(value, Op::RowSum(a.0))
    }

    pub fn row_mean(&self, a: Var) -> Var {
        let value = self.with_value(a, matrix::row_mean);
        self.push(value, Op::RowMean(a.0))
    }

    pub fn mean_all(&self, a: Var) -> Var {
        let value = self.with_value(a, matrix::mean_all);
        self.push(value, Op::MeanAll(a.0))
    }

    pub fn pairwise_euclidean(&self, features: Var, prototypes: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            matrix::pairwise_euclidean(&nodes[features.0].value, &nodes[prototypes.0].value)
                .expect("pairwise_euclidean: shape mismatch on tape")
        };
        self.push(value, Op::PairwiseEuclidean(features.0, prototypes.0))
    }

    pub fn normalize_rows(&self, a: Var) -> Var {
        let value = self.with_value(a, matrix::normalize_rows);
        self.push(value, Op::NormalizeRows(a.0))
    }

    pub fn gather_targets(&self, a: Var, targets: &[usize]) -> Var {
        let value = self.with_value(a, |m| matrix::gather_targets(m, targets));
        self.push(value, Op::Gather(a.0, targets.to_vec()))
    }

    /// Runs the backward pass from a scalar (`1 x 1`) output, visiting the
    /// recorded operations in exact reverse order.
    pub fn backward(&self, out: Var) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(
            nodes[out.0].value.shape(),
            (1, 1),
            "backward expects a scalar output"
        );
        let mut grads: Vec<Option<Matrix>> = vec![None; nodes.len()];
        grads[out.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=out.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = matrix::matmul_nt(&g, &nodes[*b].value);
                    let gb = matrix::matmul_tn(&nodes[*a].value, &g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MatMulNT(a, b) => {
                    let ga = matrix::matmul(&g, &nodes[*b].value);
                    let gb = matrix::matmul_tn(&g, &nodes[*a].value);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, matrix::scale(&g, -1.0));
                    accumulate(&mut grads, *a, g);
                }
                Op::MulElem(a, b) => {
                    let ga = matrix::mul_elem(&g, &nodes[*b].value);
                    let gb = matrix::mul_elem(&g, &nodes[*a].value);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, row) => {
                    accumulate(&mut grads, *row, matrix::col_sum(&g));
                    accumulate(&mut grads, *a, g);
                }
                Op::AddCol(a, col) => {
                    accumulate(&mut grads, *col, matrix::row_sum(&g));
                    accumulate(&mut grads, *a, g);
                }
                Op::Scale(a, c) => {
                    accumulate(&mut grads, *a, matrix::scale(&g, *c));
                }
                Op::AddConst(a) => {
                    accumulate(&mut grads, *a, g);
                }
                Op::ScaleByVar(a, s) => {
                    let sv = nodes[*s].value.scalar_value();
                    let ga = matrix::scale(&g, sv);
                    let gs = matrix::mul_elem(&g, &nodes[*a].value)
                        .data()
                        .iter()
                        .sum::<f64>();
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *s, Matrix::scalar(gs));
                }
                Op::MulConst(a, w) => {
                    accumulate(&mut grads, *a, matrix::mul_elem(&g, w));
                }
                Op::Abs(a) => {
                    let input = &nodes[*a].value;
                    let ga = elementwise(&g, input, |gv, x| gv * sign(x));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let input = &nodes[*a].value;
                    let ga = elementwise(&g, input, |gv, x| if x > 0.0 { gv } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = elementwise(&g, &node.value, |gv, y| gv * (1.0 - y * y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sqrt(a) => {
                    let ga = elementwise(&g, &node.value, |gv, y| gv / (2.0 * y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Log(a) => {
                    let input = &nodes[*a].value;
                    let ga = elementwise(&g, input, |gv, x| gv / x);
                    accumulate(&mut grads, *a, ga);
                }
                Op::ClampMin(a, floor) => {
                    let input = &nodes[*a].value;
                    let ga = elementwise(&g, input, |gv, x| if x > *floor { gv } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let (rows, cols) = y.shape();
                    let mut ga = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(yv, gv)| yv * gv).sum();
                        for c in 0..cols {
                            ga.set(r, c, yr[c] * (gr[c] - dot));
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::RowSum(a) => {
                    let (rows, cols) = nodes[*a].value.shape();
                    let mut ga = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let gv = g.get(r, 0);
                        for c in 0..cols {
                            ga.set(r, c, gv);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::RowMean(a) => {
                    let (rows, cols) = nodes[*a].value.shape();
                    let inv = 1.0 / cols as f64;
                    let mut ga = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let gv = g.get(r, 0) * inv;
                        for c in 0..cols {
                            ga.set(r, c, gv);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::MeanAll(a) => {
                    let (rows, cols) = nodes[*a].value.shape();
                    let gv = g.scalar_value() / (rows * cols) as f64;
                    accumulate(&mut grads, *a, Matrix::filled(rows, cols, gv));
                }
                Op::PairwiseEuclidean(f, p) => {
                    let feats = &nodes[*f].value;
                    let protos = &nodes[*p].value;
                    let dists = &node.value;
                    let (b, n, dim) = (feats.rows(), protos.rows(), feats.cols());
                    let mut gf = Matrix::zeros(b, dim);
                    let mut gp = Matrix::zeros(n, dim);
                    for i in 0..b {
                        for j in 0..n {
                            // d >= sqrt(DIST_EPS) > 0, so the division is safe
                            let coef = g.get(i, j) / dists.get(i, j);
                            if coef == 0.0 {
                                continue;
                            }
                            for k in 0..dim {
                                let t = coef * (feats.get(i, k) - protos.get(j, k));
                                gf[(i, k)] += t;
                                gp[(j, k)] -= t;
                            }
                        }
                    }
                    accumulate(&mut grads, *f, gf);
                    accumulate(&mut grads, *p, gp);
                }
                Op::NormalizeRows(a) => {
                    let input = &nodes[*a].value;
                    let (rows, cols) = input.shape();
                    let mut ga = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let x = input.row(r);
                        let gr = g.row(r);
                        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let denom = norm + matrix::NORM_EPS;
                        let dot: f64 = gr.iter().zip(x).map(|(gv, xv)| gv * xv).sum();
                        for c in 0..cols {
                            let mut v = gr[c] / denom;
                            if norm > 1e-30 {
                                v -= x[c] * dot / (norm * denom * denom);
                            }
                            ga.set(r, c, v);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Gather(a, targets) => {
                    let (rows, cols) = nodes[*a].value.shape();
                    let mut ga = Matrix::zeros(rows, cols);
                    for (r, &t) in targets.iter().enumerate() {
                        ga[(r, t)] += g.get(r, 0);
                    }
                    accumulate(&mut grads, *a, ga);
                }
            }
        }

        Gradients { grads }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn elementwise(g: &Matrix, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data: Vec<f64> = g
        .data()
        .iter()
        .zip(other.data())
        .map(|(&gv, &xv)| f(gv, xv))
        .collect();
    Matrix::new_unchecked(g.rows(), g.cols(), data)
}

fn accumulate(grads: &mut [Option<Matrix>], idx: usize, g: Matrix) {
    match &mut grads[idx] {
        Some(existing) => *existing = matrix::add(existing, &g),
        slot => *slot = Some(g),
    }
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` when the output does not
    /// depend on it.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Gradient as an owned matrix, zeros when independent.
    pub fn wrt_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix {
        match self.grads[v.0].as_ref() {
            Some(g) => g.clone(),
            None => Matrix::zeros(shape.0, shape.1),
        }
    }
}

/// Largest relative mismatch between tape gradients and central differences
/// `(f(x+h) - f(x-h)) / 2h`, taken over every entry of every parameter.
///
/// `build` must construct the scalar function on the given tape from leaf
/// variables created in the same order as `params`. Relative error is
/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn finite_diff_check<F>(build: F, params: &[Matrix], step: f64) -> Result<f64>
where
    F: Fn(&GradTape, &[Var]) -> Var,
{
    assert!(step > 0.0, "finite_diff_check: step must be positive");

    let eval = |mats: &[Matrix]| -> Result<f64> {
        let tape = GradTape::new();
        let vars: Vec<Var> = mats.iter().map(|m| tape.leaf(m.clone())).collect();
        let out = build(&tape, &vars);
        let v = tape.value(out).scalar_value();
        if !v.is_finite() {
            return Err(Error::Numerical(format!(
                "finite_diff_check: non-finite function value {v}"
            )));
        }
        Ok(v)
    };

    // analytic gradients
    let tape = GradTape::new();
    let vars: Vec<Var> = params.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = build(&tape, &vars);
    if !tape.value(out).scalar_value().is_finite() {
        return Err(Error::Numerical(
            "finite_diff_check: non-finite function value".to_string(),
        ));
    }
    let grads = tape.backward(out);
    let analytic: Vec<Matrix> = vars
        .iter()
        .zip(params)
        .map(|(v, p)| grads.wrt_or_zeros(*v, p.shape()))
        .collect();

    let mut worst = 0.0f64;
    let mut work: Vec<Matrix> = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        for idx in 0..param.data().len() {
            let orig = param.data()[idx];
            work[pi].data_mut()[idx] = orig + step;
            let plus = eval(&work)?;
            work[pi].data_mut()[idx] = orig - step;
            let minus = eval(&work)?;
            work[pi].data_mut()[idx] = orig;

            let fd = (plus - minus) / (2.0 * step);
            let an = analytic[pi].data()[idx];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
