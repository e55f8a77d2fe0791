use super::{CellActivation, GatedCell, Gradients, Linear, NodeId, NumError, ParamStore, Tape, Tensor2D};

/// Scale below which gradient entries are compared absolutely rather than relatively.
pub const RELATIVE_FLOOR: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Central finite-difference gradient of `f` with respect to every scalar in `store`.
pub fn central_difference<F>(store: &ParamStore, h: f64, mut f: F) -> Gradients
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut work = store.clone();
    let mut out = Gradients::zeros_like(store);
    for id in store.ids() {
        for k in 0..store.get(id).len() {
            let orig = store.get(id).data()[k];
            work.get_mut(id).data_mut()[k] = orig + h;
            let up = f(&work);
            work.get_mut(id).data_mut()[k] = orig - h;
            let down = f(&work);
            work.get_mut(id).data_mut()[k] = orig;
            out.get_mut(id).data_mut()[k] = (up - down) / (2.0 * h);
        }
    }
    out
}

pub fn max_relative_error(analytic: &Gradients, numeric: &Gradients) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..analytic.len() {
        let id = super::ParamId(i);
        for (&a, &n) in analytic.get(id).data().iter().zip(numeric.get(id).data()) {
            worst = worst.max(relative_error(a, n));
        }
    }
    worst
}

/// Outcome of comparing analytic against finite-difference gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub entries: usize,
}

impl GradCheck {
    /// Compares `analytic` with central differences of `f` at step `h`.
    pub fn run<F>(store: &ParamStore, analytic: &Gradients, h: f64, f: F) -> Self
    where
        F: FnMut(&ParamStore) -> f64,
    {
        let numeric = central_difference(store, h, f);
        Self {
            max_rel_error: max_relative_error(analytic, &numeric),
            entries: store.scalar_count(),
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Builds a random small recurrent actor-critic (encoder, gated cell
/// unrolled for up to 10 steps, policy and value heads) from `seed` and
/// compares its backward pass against central differences.
pub fn random_network_check(seed: u64) -> Result<GradCheck, NumError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let inputs = rng.gen_range(2..=5);
    let enc = rng.gen_range(2..=6);
    let size = rng.gen_range(2..=6);
    let actions = rng.gen_range(2..=4);
    let steps = rng.gen_range(1..=10);
    let batch = rng.gen_range(1..=3);
    let activation = if rng.gen_bool(0.5) { CellActivation::Silu } else { CellActivation::Tanh };

    let mut store = ParamStore::new();
    let encoder = Linear::new(&mut store, "enc", inputs, enc, &mut rng);
    let cell = GatedCell::new(&mut store, "cell", enc, size, activation, &mut rng);
    let pi = Linear::new(&mut store, "pi", size, actions, &mut rng);
    let v = Linear::new(&mut store, "v", size, 1, &mut rng);
    let xs: Vec<Tensor2D> = (0..steps)
        .map(|_| Tensor2D::from_vec(batch, inputs, (0..batch * inputs).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect::<Result<_, _>>()?;
    let labels: Vec<Vec<usize>> = (0..steps).map(|_| (0..batch).map(|_| rng.gen_range(0..actions)).collect()).collect();
    let targets: Vec<Tensor2D> = (0..steps)
        .map(|_| Tensor2D::from_vec(batch, 1, (0..batch).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect::<Result<_, _>>()?;

    let build = |tape: &mut Tape<'_>| -> Result<NodeId, NumError> {
        let mut h = tape.constant(Tensor2D::zeros(batch, size));
        let mut loss = tape.constant(Tensor2D::zeros(1, 1));
        for t in 0..steps {
            let x = tape.constant(xs[t].clone());
            let e = encoder.forward(tape, x)?;
            let e = tape.tanh(e);
            h = cell.step(tape, h, e)?;
            let logits = pi.forward(tape, h)?;
            let ls = tape.log_softmax(logits);
            let picked = tape.gather(ls, &labels[t])?;
            let nll = tape.sum(picked);
            let vt = v.forward(tape, h)?;
            let target = tape.constant(targets[t].clone());
            let err = tape.sub(vt, target)?;
            let sq = tape.square(err);
            let vl = tape.sum(sq);
            let step = tape.sub(vl, nll)?;
            loss = tape.add(loss, step)?;
        }
        Ok(loss)
    };
    let grads = {
        let mut tape = Tape::new(&store);
        let loss = build(&mut tape)?;
        tape.backward(loss)?
    };
    let mut failure = None;
    let check = GradCheck::run(&store, &grads, 1e-5, |s| {
        let mut tape = Tape::new(s);
        match build(&mut tape) {
            Ok(l) => tape.value(l).data()[0],
            Err(e) => {
                failure = Some(e);
                f64::NAN
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(check),
    }
}
