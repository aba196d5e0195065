//! Layer builders: dense, GRU cell/sequence, multi-head attention.
//!
//! A "layer" is a bundle of parameter ids plus a method that appends its
//! forward computation to a graph. Rows are the batch dimension, so one
//! call processes all agents of a timestep at once.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::nn::adam::{ParamId, ParamStore};
use crate::nn::graph::{Graph, NodeId};
use crate::nn::tensor::Tensor;

/// Uniform init in +-sqrt(6 / (fan_in + fan_out)).
pub fn xavier_uniform(rng: &mut ChaCha12Rng, fan_in: usize, fan_out: usize, rows: usize, cols: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect();
    Tensor::new(rows, cols, data).unwrap()
}

#[derive(Debug, Clone, Copy)]
pub struct FcParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl FcParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self> {
        Ok(FcParams {
            w: store.add(
                format!("{prefix}.w"),
                xavier_uniform(rng, fan_in, fan_out, fan_in, fan_out),
            )?,
            b: store.add(format!("{prefix}.b"), Tensor::zeros(1, fan_out))?,
        })
    }

    /// x [m, in] -> x W + b [m, out].
    pub fn apply(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let xw = g.matmul(x, w)?;
        g.add_row(xw, b)
    }
}

/// GRU cell parameters: reset and update gates, candidate state. The
/// candidate's hidden contribution carries its own bias so the reset gate
/// multiplies (h U_n + b_hn), matching the usual two-bias formulation.
#[derive(Debug, Clone, Copy)]
pub struct GruParams {
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_n: ParamId,
    pub b_n: ParamId,
    pub u_n: ParamId,
    pub b_hn: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self> {
        let w = |store: &mut ParamStore, name: &str, rng: &mut ChaCha12Rng| {
            store.add(
                format!("{prefix}.{name}"),
                xavier_uniform(rng, input_dim, hidden_dim, input_dim, hidden_dim),
            )
        };
        let u = |store: &mut ParamStore, name: &str, rng: &mut ChaCha12Rng| {
            store.add(
                format!("{prefix}.{name}"),
                xavier_uniform(rng, hidden_dim, hidden_dim, hidden_dim, hidden_dim),
            )
        };
        let b = |store: &mut ParamStore, name: &str| {
            store.add(format!("{prefix}.{name}"), Tensor::zeros(1, hidden_dim))
        };
        Ok(GruParams {
            w_r: w(store, "w_r", rng)?,
            u_r: u(store, "u_r", rng)?,
            b_r: b(store, "b_r")?,
            w_z: w(store, "w_z", rng)?,
            u_z: u(store, "u_z", rng)?,
            b_z: b(store, "b_z")?,
            w_n: w(store, "w_n", rng)?,
            b_n: b(store, "b_n")?,
            u_n: u(store, "u_n", rng)?,
            b_hn: b(store, "b_hn")?,
            input_dim,
            hidden_dim,
        })
    }

    /// One step: x [m, in], h [m, H] -> h' [m, H].
    pub fn cell(&self, g: &mut Graph, store: &ParamStore, x: NodeId, h: NodeId) -> Result<NodeId> {
        if g.value(x).cols() != self.input_dim || g.value(h).cols() != self.hidden_dim {
            return Err(Error::Shape(format!(
                "gru cell got x[{:?}] h[{:?}], expected cols {} and {}",
                g.value(x).shape(),
                g.value(h).shape(),
                self.input_dim,
                self.hidden_dim
            )));
        }
        let w_r = g.param(store, self.w_r);
        let u_r = g.param(store, self.u_r);
        let b_r = g.param(store, self.b_r);
        let w_z = g.param(store, self.w_z);
        let u_z = g.param(store, self.u_z);
        let b_z = g.param(store, self.b_z);
        let w_n = g.param(store, self.w_n);
        let b_n = g.param(store, self.b_n);
        let u_n = g.param(store, self.u_n);
        let b_hn = g.param(store, self.b_hn);

        let xr = g.matmul(x, w_r)?;
        let hr = g.matmul(h, u_r)?;
        let pre_r = g.add(xr, hr)?;
        let pre_r = g.add_row(pre_r, b_r)?;
        let r = g.sigmoid(pre_r);

        let xz = g.matmul(x, w_z)?;
        let hz = g.matmul(h, u_z)?;
        let pre_z = g.add(xz, hz)?;
        let pre_z = g.add_row(pre_z, b_z)?;
        let z = g.sigmoid(pre_z);

        let xn = g.matmul(x, w_n)?;
        let xn = g.add_row(xn, b_n)?;
        let hn = g.matmul(h, u_n)?;
        let hn = g.add_row(hn, b_hn)?;
        let gated = g.mul(r, hn)?;
        let pre_n = g.add(xn, gated)?;
        let n = g.tanh(pre_n);

        let neg_z = g.scale(z, -1.0);
        let one_minus_z = g.add_const(neg_z, 1.0);
        let a = g.mul(one_minus_z, n)?;
        let b = g.mul(z, h)?;
        g.add(a, b)
    }

    /// Run the cell over a sequence of inputs, starting from `h0`
    /// ([m, H]; zeros when `None`). Returns the final hidden state.
    /// Backward through time is just the tape in reverse.
    pub fn sequence(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        steps: &[NodeId],
        h0: Option<NodeId>,
    ) -> Result<NodeId> {
        let m = steps
            .first()
            .map(|&s| g.value(s).rows())
            .unwrap_or(1);
        let mut h = match h0 {
            Some(h) => h,
            None => g.input(Tensor::zeros(m, self.hidden_dim)),
        };
        for &x in steps {
            h = self.cell(g, store, x, h)?;
        }
        Ok(h)
    }
}

/// Multi-head attention projections; all square in the model dim.
#[derive(Debug, Clone, Copy)]
pub struct MhaParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub dim: usize,
    pub n_heads: usize,
}

impl MhaParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        n_heads: usize,
        rng: &mut ChaCha12Rng,
    ) -> Result<Self> {
        if n_heads == 0 || dim % n_heads != 0 {
            return Err(Error::validation(format!(
                "model dim {dim} not divisible by {n_heads} heads"
            )));
        }
        let square = |store: &mut ParamStore, name: &str, rng: &mut ChaCha12Rng| {
            store.add(
                format!("{prefix}.{name}"),
                xavier_uniform(rng, dim, dim, dim, dim),
            )
        };
        Ok(MhaParams {
            wq: square(store, "wq", rng)?,
            wk: square(store, "wk", rng)?,
            wv: square(store, "wv", rng)?,
            wo: square(store, "wo", rng)?,
            bo: store.add(format!("{prefix}.bo"), Tensor::zeros(1, dim))?,
            dim,
            n_heads,
        })
    }
}

/// Scaled dot-product attention per head over the rows of q/k/v, heads
/// concatenated and projected. q, k, v are [n, dim] nodes.
pub fn multi_head_attention(
    g: &mut Graph,
    store: &ParamStore,
    params: &MhaParams,
    queries: NodeId,
    keys: NodeId,
    values: NodeId,
) -> Result<NodeId> {
    let dim = params.dim;
    for &x in &[queries, keys, values] {
        if g.value(x).cols() != dim {
            return Err(Error::Shape(format!(
                "attention input has {} cols, model dim is {dim}",
                g.value(x).cols()
            )));
        }
    }
    let head_dim = dim / params.n_heads;
    let wq = g.param(store, params.wq);
    let wk = g.param(store, params.wk);
    let wv = g.param(store, params.wv);
    let q = g.matmul(queries, wq)?;
    let k = g.matmul(keys, wk)?;
    let v = g.matmul(values, wv)?;

    let mut heads = Vec::with_capacity(params.n_heads);
    let scale = 1.0 / (head_dim as f64).sqrt();
    for h in 0..params.n_heads {
        let qh = g.slice_cols(q, h * head_dim, head_dim)?;
        let kh = g.slice_cols(k, h * head_dim, head_dim)?;
        let vh = g.slice_cols(v, h * head_dim, head_dim)?;
        let kt = g.transpose(kh);
        let scores = g.matmul(qh, kt)?;
        let scores = g.scale(scores, scale);
        let att = g.softmax(scores);
        heads.push(g.matmul(att, vh)?);
    }
    let concat = g.concat_cols(&heads)?;
    let wo = g.param(store, params.wo);
    let bo = g.param(store, params.bo);
    let projected = g.matmul(concat, wo)?;
    g.add_row(projected, bo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::adam::GradAccum;
    use crate::nn::gradcheck::{finite_diff_check, FD_STEP};
    use crate::rng::stream;

    /// Build a scalar loss from the store, return (value, flat analytic grad).
    fn eval_with_grad(
        store: &ParamStore,
        build: &dyn Fn(&mut Graph, &ParamStore) -> NodeId,
    ) -> (f64, Vec<f64>) {
        let mut g = Graph::new();
        let out = build(&mut g, store);
        let value = g.value(out).item();
        let grads = g.backward(out).unwrap();
        let mut accum = GradAccum::new(store);
        accum.add_from_graph(&g, &grads, 1.0);
        (value, accum.flat())
    }

    /// Finite-difference check of the full parameter vector.
    fn gradcheck_store(
        store: &ParamStore,
        build: &dyn Fn(&mut Graph, &ParamStore) -> NodeId,
        tol: f64,
    ) {
        let point = store.flat_values();
        let (_, analytic) = eval_with_grad(store, build);
        let mut probe_store = store.clone();
        let mut f = |x: &[f64]| {
            probe_store.load_flat_values(x).unwrap();
            let mut g = Graph::new();
            let out = build(&mut g, &probe_store);
            g.value(out).item()
        };
        let report = finite_diff_check(&mut f, &point, &analytic, &[], FD_STEP);
        assert!(
            report.passes(tol),
            "gradcheck failed: max rel err {} at coord {}",
            report.max_rel_err,
            report.worst_coord
        );
    }

    fn random_input(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Tensor {
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::new(rows, cols, data).unwrap()
    }

    #[test]
    fn fc_identity_passthrough() {
        let mut store = ParamStore::new();
        let w = store
            .add("w", Tensor::new(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap())
            .unwrap();
        let b = store.add("b", Tensor::zeros(1, 3)).unwrap();
        let fc = FcParams { w, b };
        let mut g = Graph::new();
        let x = g.input(Tensor::row(vec![0.5, -1.5, 2.0]));
        let y = fc.apply(&mut g, &store, x).unwrap();
        assert_eq!(g.value(y).as_slice(), &[0.5, -1.5, 2.0]);
    }

    #[test]
    fn fc_one_by_one_hand_case() {
        // w=2, b=1, x=3 -> 7
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(2.0)).unwrap();
        let b = store.add("b", Tensor::scalar(1.0)).unwrap();
        let fc = FcParams { w, b };
        let mut g = Graph::new();
        let x = g.input(Tensor::scalar(3.0));
        let y = fc.apply(&mut g, &store, x).unwrap();
        assert_eq!(g.value(y).item(), 7.0);
    }

    #[test]
    fn fc_gradcheck() {
        for seed in 0..3 {
            let mut rng = stream(seed, "fc-test", 0);
            let mut store = ParamStore::new();
            let fc = FcParams::init(&mut store, "fc", 4, 3, &mut rng).unwrap();
            let x = random_input(&mut rng, 2, 4);
            let build = move |g: &mut Graph, store: &ParamStore| {
                let xn = g.input(x.clone());
                let y = fc.apply(g, store, xn).unwrap();
                let y = g.relu(y);
                g.mean(y)
            };
            gradcheck_store(&store, &build, 1e-5);
        }
    }

    #[test]
    fn gru_zero_input_zero_state_is_bounded() {
        let mut rng = stream(0, "gru-test", 0);
        let mut store = ParamStore::new();
        let gru = GruParams::init(&mut store, "gru", 2, 4, &mut rng).unwrap();
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(1, 2));
        let h0 = g.input(Tensor::zeros(1, 4));
        let mut h = h0;
        for _ in 0..5 {
            h = gru.cell(&mut g, &store, x, h).unwrap();
        }
        for &v in g.value(h).as_slice() {
            assert!(v.abs() < 1.0);
        }
    }

    #[test]
    fn gru_open_gates_give_tanh_candidate() {
        // Force z ~ 0 (update bias very negative) and r ~ 1 (reset bias very
        // positive): the new state is the tanh candidate.
        let mut rng = stream(1, "gru-test", 0);
        let mut store = ParamStore::new();
        let gru = GruParams::init(&mut store, "gru", 1, 1, &mut rng).unwrap();
        store.set_value(gru.b_z, Tensor::scalar(-40.0)).unwrap();
        store.set_value(gru.b_r, Tensor::scalar(40.0)).unwrap();

        let mut g = Graph::new();
        let x = g.input(Tensor::scalar(0.7));
        let h0 = g.input(Tensor::zeros(1, 1));
        let h1 = gru.cell(&mut g, &store, x, h0).unwrap();

        let w_n = store.value(gru.w_n).item();
        let b_n = store.value(gru.b_n).item();
        let b_hn = store.value(gru.b_hn).item();
        // h0 = 0 so the hidden contribution is just b_hn (gated by r ~ 1).
        let expected = (0.7 * w_n + b_n + b_hn).tanh();
        assert!((g.value(h1).item() - expected).abs() < 1e-12);
    }

    #[test]
    fn gru_sequence_gradcheck() {
        for seed in 0..3 {
            let mut rng = stream(seed, "gru-seq", 0);
            let mut store = ParamStore::new();
            let gru = GruParams::init(&mut store, "gru", 2, 3, &mut rng).unwrap();
            let xs: Vec<Tensor> = (0..4).map(|_| random_input(&mut rng, 2, 2)).collect();
            let build = move |g: &mut Graph, store: &ParamStore| {
                let steps: Vec<NodeId> = xs.iter().map(|x| g.input(x.clone())).collect();
                let h = gru.sequence(g, store, &steps, None).unwrap();
                let sq = g.square(h);
                g.mean(sq)
            };
            gradcheck_store(&store, &build, 1e-5);
        }
    }

    #[test]
    fn attention_single_key_ignores_query() {
        let mut rng = stream(2, "mha-test", 0);
        let mut store = ParamStore::new();
        let mha = MhaParams::init(&mut store, "mha", 4, 2, &mut rng).unwrap();
        let kv = random_input(&mut rng, 1, 4);
        let out_for_query = |q: Tensor, store: &ParamStore| {
            let mut g = Graph::new();
            let qn = g.input(q);
            let kn = g.input(kv.clone());
            let vn = g.input(kv.clone());
            let out = multi_head_attention(&mut g, store, &mha, qn, kn, vn).unwrap();
            g.value(out).as_slice().to_vec()
        };
        let a = out_for_query(random_input(&mut rng, 1, 4), &store);
        let b = out_for_query(random_input(&mut rng, 1, 4), &store);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_identical_keys_uniform_weights() {
        // With identical keys every score ties, so the output equals the
        // projected mean of values for any query.
        let mut rng = stream(3, "mha-test", 0);
        let mut store = ParamStore::new();
        let mha = MhaParams::init(&mut store, "mha", 4, 2, &mut rng).unwrap();
        let key_row = random_input(&mut rng, 1, 4);
        let mut keys = Vec::new();
        for _ in 0..3 {
            keys.extend_from_slice(key_row.as_slice());
        }
        let keys = Tensor::new(3, 4, keys).unwrap();
        let values = random_input(&mut rng, 3, 4);
        let queries = random_input(&mut rng, 3, 4);

        let mut g = Graph::new();
        let qn = g.input(queries);
        let kn = g.input(keys);
        let vn = g.input(values.clone());
        let out = multi_head_attention(&mut g, &store, &mha, qn, kn, vn).unwrap();

        let mut g2 = Graph::new();
        let vmean = {
            let v = g2.input(values);
            g2.mean_rows(v)
        };
        let vproj = {
            let wv = g2.param(&store, mha.wv);
            let wo = g2.param(&store, mha.wo);
            let bo = g2.param(&store, mha.bo);
            let x = g2.matmul(vmean, wv).unwrap();
            let x = g2.matmul(x, wo).unwrap();
            g2.add_row(x, bo).unwrap()
        };
        for r in 0..3 {
            for (a, b) in g.value(out).row_slice(r).iter().zip(g2.value(vproj).as_slice()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn attention_gradcheck() {
        for seed in 0..3 {
            let mut rng = stream(seed, "mha-grad", 0);
            let mut store = ParamStore::new();
            let mha = MhaParams::init(&mut store, "mha", 4, 2, &mut rng).unwrap();
            let x = random_input(&mut rng, 3, 4);
            let build = move |g: &mut Graph, store: &ParamStore| {
                let xn = g.input(x.clone());
                let out = multi_head_attention(g, store, &mha, xn, xn, xn).unwrap();
                let sq = g.square(out);
                g.mean(sq)
            };
            gradcheck_store(&store, &build, 1e-5);
        }
    }

    #[test]
    fn indivisible_heads_rejected() {
        let mut rng = stream(0, "mha-bad", 0);
        let mut store = ParamStore::new();
        assert!(MhaParams::init(&mut store, "mha", 5, 2, &mut rng).is_err());
    }
}
