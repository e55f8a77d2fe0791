use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NodeId, NumError, ParamId, ParamStore, Tape};

/// Affine map `y = x·W + b` with `W: in × out`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.add_uniform(format!("{name}.w"), inputs, outputs, inputs, rng);
        let b = store.add_uniform(format!("{name}.b"), 1, outputs, inputs, rng);
        Self {
            w,
            b,
            inputs,
            outputs,
        }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: NodeId) -> Result<NodeId, NumError> {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        tape.linear(x, w, b)
    }
}

/// Activation applied to the candidate state of a [`GatedCell`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellActivation {
    #[default]
    Silu,
    Tanh,
}

/// Gated recurrent cell (update gate, reset gate, candidate).
///
/// Gate weights are fused into `in × 3H` and `H × 3H` matrices laid out as
/// `[reset | update | candidate]`. The reset gate multiplies the recurrent
/// candidate term after its matmul.
#[derive(Clone, Copy, Debug)]
pub struct GatedCell {
    pub wx: ParamId,
    pub wh: ParamId,
    pub bx: ParamId,
    pub bh: ParamId,
    pub inputs: usize,
    pub size: usize,
    pub activation: CellActivation,
}

impl GatedCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        size: usize,
        activation: CellActivation,
        rng: &mut R,
    ) -> Self {
        let wx = store.add_uniform(format!("{name}.wx"), inputs, 3 * size, size, rng);
        let wh = store.add_uniform(format!("{name}.wh"), size, 3 * size, size, rng);
        let bx = store.add_uniform(format!("{name}.bx"), 1, 3 * size, size, rng);
        let bh = store.add_uniform(format!("{name}.bh"), 1, 3 * size, size, rng);
        Self {
            wx,
            wh,
            bx,
            bh,
            inputs,
            size,
            activation,
        }
    }

    /// One step for a batch: `h` is `B × H`, `x` is `B × in`.
    pub fn step(&self, tape: &mut Tape<'_>, h: NodeId, x: NodeId) -> Result<NodeId, NumError> {
        let (hr, hc) = tape.value(h).shape();
        if hc != self.size || tape.value(x).cols() != self.inputs || tape.value(x).rows() != hr {
            return Err(NumError::Shape(format!(
                "cell expects h: B x {} and x: B x {}, got {:?} and {:?}",
                self.size,
                self.inputs,
                tape.value(h).shape(),
                tape.value(x).shape()
            )));
        }
        let n = self.size;
        let wx = tape.param(self.wx);
        let bx = tape.param(self.bx);
        let wh = tape.param(self.wh);
        let bh = tape.param(self.bh);
        let gx = tape.linear(x, wx, bx)?;
        let gh = tape.linear(h, wh, bh)?;

        let xr = tape.slice_cols(gx, 0, n)?;
        let hr_ = tape.slice_cols(gh, 0, n)?;
        let r_pre = tape.add(xr, hr_)?;
        let r = tape.sigmoid(r_pre);

        let xu = tape.slice_cols(gx, n, n)?;
        let hu = tape.slice_cols(gh, n, n)?;
        let u_pre = tape.add(xu, hu)?;
        let u = tape.sigmoid(u_pre);

        let xn = tape.slice_cols(gx, 2 * n, n)?;
        let hn = tape.slice_cols(gh, 2 * n, n)?;
        let gated = tape.mul(r, hn)?;
        let n_pre = tape.add(xn, gated)?;
        let cand = match self.activation {
            CellActivation::Silu => tape.silu(n_pre),
            CellActivation::Tanh => tape.tanh(n_pre),
        };

        // h' = cand + u ⊙ (h − cand)
        let diff = tape.sub(h, cand)?;
        let keep = tape.mul(u, diff)?;
        tape.add(cand, keep)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numgrad::Tensor2D;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_cell_maps_zero_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let cell = GatedCell::new(&mut store, "cell", 3, 4, CellActivation::Silu, &mut rng);
        for id in store.ids().collect::<Vec<_>>() {
            let (r, c) = store.get(id).shape();
            store.set(id, Tensor2D::zeros(r, c)).unwrap();
        }
        let mut tape = Tape::new(&store);
        let h = tape.constant(Tensor2D::zeros(1, 4));
        let x = tape.constant(Tensor2D::zeros(1, 3));
        let out = cell.step(&mut tape, h, x).unwrap();
        assert_eq!(tape.value(out).data(), &[0.0; 4]);
    }

    #[test]
    fn cell_step_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let cell = GatedCell::new(&mut store, "cell", 2, 5, CellActivation::Silu, &mut rng);
        let run = || {
            let mut tape = Tape::new(&store);
            let h = tape.constant(Tensor2D::row_vector(vec![0.1, -0.2, 0.3, 0.0, 0.5]));
            let x = tape.constant(Tensor2D::row_vector(vec![1.0, -1.0]));
            let out = cell.step(&mut tape, h, x).unwrap();
            tape.value(out).clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn cell_rejects_wrong_hidden_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let cell = GatedCell::new(&mut store, "cell", 2, 5, CellActivation::Tanh, &mut rng);
        let mut tape = Tape::new(&store);
        let h = tape.constant(Tensor2D::zeros(1, 4));
        let x = tape.constant(Tensor2D::zeros(1, 2));
        assert!(matches!(cell.step(&mut tape, h, x), Err(NumError::Shape(_))));
    }
}
