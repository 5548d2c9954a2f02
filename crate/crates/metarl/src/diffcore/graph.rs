//! Reverse-mode automatic differentiation over a small set of primitive
//! matrix operations. A [`Graph`] is an acyclic list of nodes built once per
//! evaluation; parameters bind by segment name against a
//! [`ParamVector`](super::ParamVector) and inputs bind by offset into one
//! flat `f64` slice, so the same graph structure can be re-evaluated at
//! different parameter and input values.
//!
//! Three passes are provided: plain forward evaluation, a reverse pass
//! seeded either at the scalar output or at an arbitrary node, and a
//! forward-tangent pass (directional derivative). All three are first-order;
//! nothing here differentiates a derivative.

use super::matrix::Mat;
use super::params::ParamVector;
use super::DiffError;

/// Handle to a node inside its builder/graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    /// Slice of the flat input vector, reshaped row-major.
    Input { offset: usize },
    Const(Mat),
    /// Named segment of the bound parameter vector, reshaped row-major.
    Param { name: String },
    /// `W * X + b * 1^T` with `W: (m,n)`, `X: (n,k)`, `b: (m,1)`.
    Affine { w: NodeId, b: NodeId, x: NodeId },
    Tanh(NodeId),
    Sigmoid(NodeId),
    Log(NodeId),
    Exp(NodeId),
    Square(NodeId),
    /// Elementwise sign with `sign(0) = 0`.
    Sign(NodeId),
    /// Elementwise `max(x, c)`.
    MaxConst { x: NodeId, c: f64 },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `k * x`.
    Scale { x: NodeId, k: f64 },
    /// `x + k`.
    Shift { x: NodeId, k: f64 },
    /// Sum of all elements, a 1x1 result.
    Sum(NodeId),
    /// Mean of all elements, a 1x1 result.
    Mean(NodeId),
    /// Per-column Euclidean norm: (d,k) -> (1,k).
    ColNorm(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input { .. } => "input",
            Op::Const(_) => "const",
            Op::Param { .. } => "param",
            Op::Affine { .. } => "affine",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Log(_) => "log",
            Op::Exp(_) => "exp",
            Op::Square(_) => "square",
            Op::Sign(_) => "sign",
            Op::MaxConst { .. } => "max_const",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale { .. } => "scale",
            Op::Shift { .. } => "shift",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::ColNorm(_) => "col_norm",
        }
    }
}

/// Incrementally builds a [`Graph`]. Shape errors during construction are
/// programmer errors and panic with a description; binding errors at
/// evaluation time come back as [`DiffError`].
pub struct GraphBuilder {
    nodes: Vec<Op>,
    shapes: Vec<(usize, usize)>,
    input_len: usize,
}

impl GraphBuilder {
    pub fn new(input_len: usize) -> Self {
        GraphBuilder { nodes: Vec::new(), shapes: Vec::new(), input_len }
    }

    fn push(&mut self, op: Op, shape: (usize, usize)) -> NodeId {
        assert!(shape.0 > 0 && shape.1 > 0, "zero-sized node");
        self.nodes.push(op);
        self.shapes.push(shape);
        NodeId(self.nodes.len() - 1)
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        self.shapes[id.0]
    }

    /// Declares `rows x cols` values read from the flat input vector at
    /// `offset`, row-major.
    pub fn input(&mut self, offset: usize, rows: usize, cols: usize) -> NodeId {
        assert!(
            offset + rows * cols <= self.input_len,
            "input slice {offset}+{rows}x{cols} exceeds declared arity {}",
            self.input_len
        );
        self.push(Op::Input { offset }, (rows, cols))
    }

    pub fn constant(&mut self, m: Mat) -> NodeId {
        let shape = m.shape();
        self.push(Op::Const(m), shape)
    }

    pub fn scalar_const(&mut self, v: f64) -> NodeId {
        self.constant(Mat::scalar(v))
    }

    /// Declares a parameter segment viewed as a `rows x cols` matrix.
    pub fn param(&mut self, name: &str, rows: usize, cols: usize) -> NodeId {
        self.push(Op::Param { name: name.to_string() }, (rows, cols))
    }

    pub fn affine(&mut self, w: NodeId, b: NodeId, x: NodeId) -> NodeId {
        let (m, n) = self.shape(w);
        let (xr, xc) = self.shape(x);
        let bs = self.shape(b);
        assert_eq!(n, xr, "affine: W cols {n} != X rows {xr}");
        assert_eq!(bs, (m, 1), "affine: bias must be ({m},1), got {bs:?}");
        self.push(Op::Affine { w, b, x }, (m, xc))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let s = self.shape(x);
        self.push(Op::Tanh(x), s)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let s = self.shape(x);
        self.push(Op::Sigmoid(x), s)
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        let s = self.shape(x);
        self.push(Op::Log(x), s)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let s = self.shape(x);
        self.push(Op::Exp(x), s)
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let s = self.shape(x);
        self.push(Op::Square(x), s)
    }

    pub fn sign(&mut self, x: NodeId) -> NodeId {
        let s = self.shape(x);
        self.push(Op::Sign(x), s)
    }

    pub fn max_const(&mut self, x: NodeId, c: f64) -> NodeId {
        let s = self.shape(x);
        self.push(Op::MaxConst { x, c }, s)
    }

    fn bcast_shape(&self, a: NodeId, b: NodeId, what: &str) -> (usize, usize) {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        let r = match (ar, br) {
            (x, y) if x == y => x,
            (x, 1) => x,
            (1, y) => y,
            _ => panic!("{what}: incompatible rows {ar} vs {br}"),
        };
        let c = match (ac, bc) {
            (x, y) if x == y => x,
            (x, 1) => x,
            (1, y) => y,
            _ => panic!("{what}: incompatible cols {ac} vs {bc}"),
        };
        (r, c)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let s = self.bcast_shape(a, b, "add");
        self.push(Op::Add(a, b), s)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let s = self.bcast_shape(a, b, "sub");
        self.push(Op::Sub(a, b), s)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let s = self.bcast_shape(a, b, "mul");
        self.push(Op::Mul(a, b), s)
    }

    pub fn scale(&mut self, x: NodeId, k: f64) -> NodeId {
        let s = self.shape(x);
        self.push(Op::Scale { x, k }, s)
    }

    pub fn shift(&mut self, x: NodeId, k: f64) -> NodeId {
        let s = self.shape(x);
        self.push(Op::Shift { x, k }, s)
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        self.scale(x, -1.0)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sum(x), (1, 1))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Mean(x), (1, 1))
    }

    pub fn col_norm(&mut self, x: NodeId) -> NodeId {
        let (_, c) = self.shape(x);
        self.push(Op::ColNorm(x), (1, c))
    }

    /// Symmetric clip to `[-bound, bound]`, composed from max-with-constant
    /// and negation: `min(max(x, -b), b) = -max(-max(x, -b), -b)`.
    pub fn clip_sym(&mut self, x: NodeId, bound: f64) -> NodeId {
        assert!(bound >= 0.0, "clip bound must be non-negative");
        let lo = self.max_const(x, -bound);
        let neg_lo = self.neg(lo);
        let capped = self.max_const(neg_lo, -bound);
        self.neg(capped)
    }

    pub fn finish(self, output: NodeId) -> Graph {
        assert!(output.0 < self.nodes.len(), "output node out of range");
        Graph {
            nodes: self.nodes,
            shapes: self.shapes,
            input_len: self.input_len,
            output,
        }
    }
}

/// A finished computation graph. See the module docs for the three passes.
pub struct Graph {
    nodes: Vec<Op>,
    shapes: Vec<(usize, usize)>,
    input_len: usize,
    output: NodeId,
}

/// Elementwise binary with row/column broadcasting on either operand.
fn bcast_binary(a: &Mat, b: &Mat, out_shape: (usize, usize), f: impl Fn(f64, f64) -> f64) -> Mat {
    let (r, c) = out_shape;
    if a.shape() == b.shape() {
        let mut out = Mat::zeros(r, c);
        for ((o, &x), &y) in out
            .as_mut_slice()
            .iter_mut()
            .zip(a.as_slice().iter())
            .zip(b.as_slice().iter())
        {
            *o = f(x, y);
        }
        return out;
    }
    Mat::from_fn(r, c, |i, j| {
        let x = a.get(if a.rows() == 1 { 0 } else { i }, if a.cols() == 1 { 0 } else { j });
        let y = b.get(if b.rows() == 1 { 0 } else { i }, if b.cols() == 1 { 0 } else { j });
        f(x, y)
    })
}

/// Sums `adj` down to `shape` (the reverse of broadcasting).
fn reduce_to(adj: &Mat, shape: (usize, usize)) -> Mat {
    if adj.shape() == shape {
        return adj.clone();
    }
    match shape {
        (1, 1) => Mat::scalar(adj.sum()),
        (r, 1) => {
            assert_eq!(r, adj.rows());
            adj.row_sums()
        }
        (1, c) => {
            assert_eq!(c, adj.cols());
            adj.col_sums()
        }
        _ => panic!("cannot reduce {:?} to {:?}", adj.shape(), shape),
    }
}

impl Graph {
    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn output(&self) -> NodeId {
        self.output
    }

    pub fn node_shape(&self, id: NodeId) -> (usize, usize) {
        self.shapes[id.0]
    }

    fn resolve_param(&self, params: &ParamVector, id: usize) -> Result<Mat, DiffError> {
        let (name, (r, c)) = match &self.nodes[id] {
            Op::Param { name } => (name, self.shapes[id]),
            _ => unreachable!(),
        };
        let seg = params.seg(name)?;
        if seg.len() != r * c {
            return Err(DiffError::SegmentShape {
                name: name.clone(),
                len: seg.len(),
                rows: r,
                cols: c,
            });
        }
        Ok(Mat::from_vec(r, c, seg.to_vec()))
    }

    /// Evaluates every node. Checks input arity and parameter binding; does
    /// not scan intermediate values for finiteness (see [`Graph::eval_scalar`]).
    pub fn forward(&self, params: &ParamVector, inputs: &[f64]) -> Result<Vec<Mat>, DiffError> {
        if inputs.len() != self.input_len {
            return Err(DiffError::InputArity { got: inputs.len(), want: self.input_len });
        }
        let mut vals: Vec<Mat> = Vec::with_capacity(self.nodes.len());
        for (id, op) in self.nodes.iter().enumerate() {
            let (r, c) = self.shapes[id];
            let v = match op {
                Op::Input { offset } => {
                    Mat::from_vec(r, c, inputs[*offset..*offset + r * c].to_vec())
                }
                Op::Const(m) => m.clone(),
                Op::Param { .. } => self.resolve_param(params, id)?,
                Op::Affine { w, b, x } => {
                    let mut y = vals[w.0].matmul(&vals[x.0]);
                    let bias = &vals[b.0];
                    for i in 0..y.rows() {
                        let bv = bias.get(i, 0);
                        for j in 0..y.cols() {
                            y.set(i, j, y.get(i, j) + bv);
                        }
                    }
                    y
                }
                Op::Tanh(x) => vals[x.0].map(f64::tanh),
                Op::Sigmoid(x) => vals[x.0].map(|v| 1.0 / (1.0 + (-v).exp())),
                Op::Log(x) => vals[x.0].map(f64::ln),
                Op::Exp(x) => vals[x.0].map(f64::exp),
                Op::Square(x) => vals[x.0].map(|v| v * v),
                Op::Sign(x) => vals[x.0].map(|v| {
                    if v > 0.0 {
                        1.0
                    } else if v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                }),
                Op::MaxConst { x, c } => vals[x.0].map(|v| if v > *c { v } else { *c }),
                Op::Add(a, b) => bcast_binary(&vals[a.0], &vals[b.0], (r, c), |x, y| x + y),
                Op::Sub(a, b) => bcast_binary(&vals[a.0], &vals[b.0], (r, c), |x, y| x - y),
                Op::Mul(a, b) => bcast_binary(&vals[a.0], &vals[b.0], (r, c), |x, y| x * y),
                Op::Scale { x, k } => vals[x.0].map(|v| k * v),
                Op::Shift { x, k } => vals[x.0].map(|v| v + k),
                Op::Sum(x) => Mat::scalar(vals[x.0].sum()),
                Op::Mean(x) => Mat::scalar(vals[x.0].sum() / vals[x.0].len() as f64),
                Op::ColNorm(x) => {
                    let src = &vals[x.0];
                    Mat::from_fn(1, src.cols(), |_, j| {
                        let mut acc = 0.0;
                        for i in 0..src.rows() {
                            let v = src.get(i, j);
                            acc += v * v;
                        }
                        acc.sqrt()
                    })
                }
            };
            debug_assert_eq!(v.shape(), (r, c), "node {id} shape drift");
            vals.push(v);
        }
        Ok(vals)
    }

    /// Forward pass plus a finiteness scan of every intermediate; the output
    /// must be a 1x1 scalar.
    pub fn eval_scalar(&self, params: &ParamVector, inputs: &[f64]) -> Result<f64, DiffError> {
        let vals = self.forward(params, inputs)?;
        for (id, v) in vals.iter().enumerate() {
            if !v.all_finite() {
                return Err(DiffError::NonFinite {
                    node: id,
                    op: self.nodes[id].name().to_string(),
                });
            }
        }
        self.require_scalar_output()?;
        Ok(vals[self.output.0].scalar_value())
    }

    fn require_scalar_output(&self) -> Result<(), DiffError> {
        let (r, c) = self.shapes[self.output.0];
        if (r, c) != (1, 1) {
            return Err(DiffError::NonScalarOutput { rows: r, cols: c });
        }
        Ok(())
    }

    /// Reverse pass from `node` with adjoint `seed`, over precomputed
    /// `values`. Returns gradients with respect to parameters and inputs.
    pub fn backward_from(
        &self,
        values: &[Mat],
        params: &ParamVector,
        node: NodeId,
        seed: &Mat,
    ) -> (ParamVector, Vec<f64>) {
        assert_eq!(values.len(), self.nodes.len(), "values from a different graph");
        assert_eq!(seed.shape(), self.shapes[node.0], "seed shape mismatch");
        let mut adj: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        adj[node.0] = Some(seed.clone());
        let mut pgrad = params.zeros_like();
        let mut igrad = vec![0.0; self.input_len];

        for id in (0..=node.0).rev() {
            let a = match adj[id].take() {
                Some(a) => a,
                None => continue,
            };
            let acc = |adj: &mut Vec<Option<Mat>>, child: NodeId, m: Mat| {
                match &mut adj[child.0] {
                    Some(existing) => existing.axpy(1.0, &m),
                    slot @ None => *slot = Some(m),
                }
            };
            match &self.nodes[id] {
                Op::Input { offset } => {
                    for (g, &v) in igrad[*offset..*offset + a.len()].iter_mut().zip(a.as_slice())
                    {
                        *g += v;
                    }
                }
                Op::Const(_) => {}
                Op::Param { name } => {
                    let seg = pgrad.seg_mut(name).expect("segment resolved in forward");
                    for (g, &v) in seg.iter_mut().zip(a.as_slice()) {
                        *g += v;
                    }
                }
                Op::Affine { w, b, x } => {
                    acc(&mut adj, *w, a.matmul_nt(&values[x.0]));
                    acc(&mut adj, *b, a.row_sums());
                    acc(&mut adj, *x, values[w.0].matmul_tn(&a));
                }
                Op::Tanh(x) => {
                    let y = &values[id];
                    acc(&mut adj, *x, bcast_binary(&a, y, a.shape(), |g, t| g * (1.0 - t * t)));
                }
                Op::Sigmoid(x) => {
                    let y = &values[id];
                    acc(&mut adj, *x, bcast_binary(&a, y, a.shape(), |g, s| g * s * (1.0 - s)));
                }
                Op::Log(x) => {
                    let xv = &values[x.0];
                    acc(&mut adj, *x, bcast_binary(&a, xv, a.shape(), |g, v| g / v));
                }
                Op::Exp(x) => {
                    let y = &values[id];
                    acc(&mut adj, *x, bcast_binary(&a, y, a.shape(), |g, e| g * e));
                }
                Op::Square(x) => {
                    let xv = &values[x.0];
                    acc(&mut adj, *x, bcast_binary(&a, xv, a.shape(), |g, v| g * 2.0 * v));
                }
                Op::Sign(_) => {} // derivative zero almost everywhere
                Op::MaxConst { x, c } => {
                    let xv = &values[x.0];
                    acc(
                        &mut adj,
                        *x,
                        bcast_binary(&a, xv, a.shape(), |g, v| if v > *c { g } else { 0.0 }),
                    );
                }
                Op::Add(l, r) => {
                    acc(&mut adj, *l, reduce_to(&a, self.shapes[l.0]));
                    acc(&mut adj, *r, reduce_to(&a, self.shapes[r.0]));
                }
                Op::Sub(l, r) => {
                    acc(&mut adj, *l, reduce_to(&a, self.shapes[l.0]));
                    let mut neg = reduce_to(&a, self.shapes[r.0]);
                    for v in neg.as_mut_slice() {
                        *v = -*v;
                    }
                    acc(&mut adj, *r, neg);
                }
                Op::Mul(l, r) => {
                    let gl = bcast_binary(&a, &values[r.0], a.shape(), |g, v| g * v);
                    let gr = bcast_binary(&a, &values[l.0], a.shape(), |g, v| g * v);
                    acc(&mut adj, *l, reduce_to(&gl, self.shapes[l.0]));
                    acc(&mut adj, *r, reduce_to(&gr, self.shapes[r.0]));
                }
                Op::Scale { x, k } => acc(&mut adj, *x, a.map(|g| g * k)),
                Op::Shift { x, .. } => acc(&mut adj, *x, a.clone()),
                Op::Sum(x) => {
                    let g = a.scalar_value();
                    let (r, c) = self.shapes[x.0];
                    acc(&mut adj, *x, Mat::from_fn(r, c, |_, _| g));
                }
                Op::Mean(x) => {
                    let (r, c) = self.shapes[x.0];
                    let g = a.scalar_value() / (r * c) as f64;
                    acc(&mut adj, *x, Mat::from_fn(r, c, |_, _| g));
                }
                Op::ColNorm(x) => {
                    let xv = &values[x.0];
                    let norms = &values[id];
                    let mut gx = Mat::zeros(xv.rows(), xv.cols());
                    for j in 0..xv.cols() {
                        let n = norms.get(0, j);
                        if n == 0.0 {
                            continue; // subgradient zero at the kink
                        }
                        let g = a.get(0, j);
                        for i in 0..xv.rows() {
                            gx.set(i, j, g * xv.get(i, j) / n);
                        }
                    }
                    acc(&mut adj, *x, gx);
                }
            }
        }
        (pgrad, igrad)
    }

    /// Scalar value plus gradients with respect to parameters and inputs.
    pub fn value_and_grads(
        &self,
        params: &ParamVector,
        inputs: &[f64],
    ) -> Result<(f64, ParamVector, Vec<f64>), DiffError> {
        self.require_scalar_output()?;
        let vals = self.forward(params, inputs)?;
        let out = vals[self.output.0].scalar_value();
        if !out.is_finite() {
            return Err(DiffError::NonFinite {
                node: self.output.0,
                op: self.nodes[self.output.0].name().to_string(),
            });
        }
        let (pg, ig) = self.backward_from(&vals, params, self.output, &Mat::scalar(1.0));
        Ok((out, pg, ig))
    }

    /// Gradient of the scalar output with respect to the parameter vector.
    pub fn grad_params(
        &self,
        params: &ParamVector,
        inputs: &[f64],
    ) -> Result<ParamVector, DiffError> {
        Ok(self.value_and_grads(params, inputs)?.1)
    }

    /// Gradient of the scalar output with respect to the flat input vector.
    pub fn grad_inputs(
        &self,
        params: &ParamVector,
        inputs: &[f64],
    ) -> Result<Vec<f64>, DiffError> {
        Ok(self.value_and_grads(params, inputs)?.2)
    }

    /// Forward-tangent (directional derivative) pass over precomputed
    /// `values`: returns the tangent of `node` given parameter direction
    /// `dparams` and input direction `dinputs` (either may be absent,
    /// meaning zero).
    pub fn tangent_at(
        &self,
        values: &[Mat],
        dparams: Option<&ParamVector>,
        dinputs: Option<&[f64]>,
        node: NodeId,
    ) -> Mat {
        assert_eq!(values.len(), self.nodes.len(), "values from a different graph");
        if let Some(di) = dinputs {
            assert_eq!(di.len(), self.input_len, "input tangent arity mismatch");
        }
        let mut tans: Vec<Mat> = Vec::with_capacity(node.0 + 1);
        for id in 0..=node.0 {
            let (r, c) = self.shapes[id];
            let t = match &self.nodes[id] {
                Op::Input { offset } => match dinputs {
                    Some(di) => Mat::from_vec(r, c, di[*offset..*offset + r * c].to_vec()),
                    None => Mat::zeros(r, c),
                },
                Op::Const(_) => Mat::zeros(r, c),
                Op::Param { name } => match dparams {
                    Some(dp) => {
                        let seg = dp.seg(name).expect("tangent layout matches");
                        Mat::from_vec(r, c, seg.to_vec())
                    }
                    None => Mat::zeros(r, c),
                },
                Op::Affine { w, b, x } => {
                    let mut y = tans[w.0].matmul(&values[x.0]);
                    y.axpy(1.0, &values[w.0].matmul(&tans[x.0]));
                    let db = &tans[b.0];
                    for i in 0..y.rows() {
                        let bv = db.get(i, 0);
                        for j in 0..y.cols() {
                            y.set(i, j, y.get(i, j) + bv);
                        }
                    }
                    y
                }
                Op::Tanh(x) => {
                    bcast_binary(&tans[x.0], &values[id], (r, c), |d, y| d * (1.0 - y * y))
                }
                Op::Sigmoid(x) => {
                    bcast_binary(&tans[x.0], &values[id], (r, c), |d, s| d * s * (1.0 - s))
                }
                Op::Log(x) => bcast_binary(&tans[x.0], &values[x.0], (r, c), |d, v| d / v),
                Op::Exp(x) => bcast_binary(&tans[x.0], &values[id], (r, c), |d, e| d * e),
                Op::Square(x) => {
                    bcast_binary(&tans[x.0], &values[x.0], (r, c), |d, v| d * 2.0 * v)
                }
                Op::Sign(_) => Mat::zeros(r, c),
                Op::MaxConst { x, c: cc } => {
                    bcast_binary(&tans[x.0], &values[x.0], (r, c), |d, v| {
                        if v > *cc {
                            d
                        } else {
                            0.0
                        }
                    })
                }
                Op::Add(a, b) => bcast_binary(&tans[a.0], &tans[b.0], (r, c), |x, y| x + y),
                Op::Sub(a, b) => bcast_binary(&tans[a.0], &tans[b.0], (r, c), |x, y| x - y),
                Op::Mul(a, b) => {
                    let t1 = bcast_binary(&tans[a.0], &values[b.0], (r, c), |d, v| d * v);
                    let t2 = bcast_binary(&values[a.0], &tans[b.0], (r, c), |v, d| v * d);
                    let mut out = t1;
                    out.axpy(1.0, &t2);
                    out
                }
                Op::Scale { x, k } => tans[x.0].map(|d| d * k),
                Op::Shift { x, .. } => tans[x.0].clone(),
                Op::Sum(x) => Mat::scalar(tans[x.0].sum()),
                Op::Mean(x) => Mat::scalar(tans[x.0].sum() / tans[x.0].len() as f64),
                Op::ColNorm(x) => {
                    let xv = &values[x.0];
                    let dv = &tans[x.0];
                    let norms = &values[id];
                    Mat::from_fn(1, xv.cols(), |_, j| {
                        let n = norms.get(0, j);
                        if n == 0.0 {
                            return 0.0;
                        }
                        let mut acc = 0.0;
                        for i in 0..xv.rows() {
                            acc += xv.get(i, j) * dv.get(i, j);
                        }
                        acc / n
                    })
                }
            };
            tans.push(t);
        }
        tans.pop().unwrap()
    }
}
