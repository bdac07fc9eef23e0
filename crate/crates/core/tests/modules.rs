//! Network building blocks against central finite differences in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svc_autograd::check::{max_relative_error, numeric_gradients};
use svc_autograd::{Graph, ParamId, ParamStore, Tensor, Var};
use svc_core::config::{Profile, RunConfig};
use svc_core::confusion::ConvHead;
use svc_core::cpc::CpcModule;
use svc_core::features::PitchTrack;
use svc_core::model::{Cbhg, Decoder};
use svc_core::nn::{BiGru, Bind, Gru, Lstm};

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Compares analytic and numeric gradients of `sum(forward(x) * probe)` with
/// respect to the input and every parameter in `store`.
fn check<Fun>(store: &ParamStore<f64>, x: Tensor<f64>, forward: Fun) -> f64
where
    Fun: for<'g> Fn(&'g Graph<f64>, Bind<'_, f64>, Var<'g, f64>) -> Var<'g, f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let probe = {
        let g = Graph::inference();
        random(&forward(&g, Bind::frozen(store), g.constant(x.clone())).shape(), &mut rng)
    };
    let ids: Vec<ParamId> = store.ids().collect();
    let scalar = |inputs: &[Tensor<f64>]| {
        let mut s = store.clone();
        for (&id, t) in ids.iter().zip(&inputs[1..]) {
            *s.get_mut(id) = t.clone();
        }
        let g = Graph::inference();
        (forward(&g, Bind::frozen(&s), g.constant(inputs[0].clone())) * g.constant(probe.clone())).sum().item()
    };
    let mut inputs = vec![x.clone()];
    inputs.extend(ids.iter().map(|&id| store.get(id).clone()));
    let numeric = numeric_gradients(scalar, &inputs, 1e-5);

    let g = Graph::new();
    let xv = g.input(x);
    let loss = (forward(&g, Bind::trainable(store), xv) * g.constant(probe)).sum();
    let grads = g.backward(loss);
    let mut analytic = vec![grads.wrt(xv).expect("input gradient").clone()];
    // Parameters outside the forward path get no gradient; their numeric
    // gradient is then exactly zero as well.
    analytic.extend(ids.iter().map(|&id| grads.param(store, id).cloned().unwrap_or_else(|| Tensor::zeros(store.get(id).shape()))));
    analytic.iter().zip(&numeric).map(|(a, n)| max_relative_error(a, n, 1e-6)).fold(0.0, f64::max)
}

#[test]
fn gru_both_directions() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let gru = Gru::new(&mut store, "gru", 3, 4, &mut rng);
    let x = random(&[2, 5, 3], &mut rng);
    for reverse in [false, true] {
        let err = check(&store, x.clone(), |g, p, x| gru.forward(g, p, x, reverse));
        assert!(err < 1e-5, "reverse={reverse}: {err:e}");
    }
}

#[test]
fn bidirectional_gru() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store = ParamStore::new();
    let gru = BiGru::new(&mut store, "bigru", 3, 2, &mut rng);
    let err = check(&store, random(&[1, 4, 3], &mut rng), |g, p, x| gru.forward(g, p, x));
    assert!(err < 1e-5, "{err:e}");
}

#[test]
fn lstm() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let lstm = Lstm::new(&mut store, "lstm", 3, 4, &mut rng);
    let err = check(&store, random(&[2, 5, 3], &mut rng), |g, p, x| lstm.forward(g, p, x));
    assert!(err < 1e-5, "{err:e}");
}

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::profile(Profile::Desk);
    cfg.model.cbhg.bank_size = 3;
    cfg.model.cbhg.channels = 3;
    cfg.model.cbhg.highway_layers = 2;
    cfg.model.cbhg.gru_hidden = 2;
    cfg.model.decoder.initial_channels = 8;
    cfg.model.decoder.harmonics = 2;
    cfg.confusion.channels = 3;
    cfg.confusion.layers = 2;
    cfg.cpc.context_dim = 3;
    cfg
}

#[test]
fn cbhg() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::new();
    let net = Cbhg::new(&mut store, "cbhg", 3, 4, &cfg.model.cbhg, &mut rng);
    let err = check(&store, random(&[1, 6, 3], &mut rng), |g, p, x| net.forward(g, p, x));
    assert!(err < 1e-5, "{err:e}");
}

#[test]
fn confusion_head() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut store = ParamStore::new();
    let head = ConvHead::new(&mut store, "head", 3, 2, &cfg.confusion, &mut rng);
    let err = check(&store, random(&[2, 5, 3], &mut rng), |g, p, x| head.forward(g, p, x));
    assert!(err < 1e-5, "{err:e}");
}

#[test]
fn cpc_context_network() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let cpc = CpcModule::new(&mut store, "cpc", 3, &cfg.cpc, &mut rng);
    let err = check(&store, random(&[1, 5, 3], &mut rng), |g, p, x| cpc.context(g, p, x));
    assert!(err < 1e-5, "{err:e}");
}

#[test]
fn decoder() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = ParamStore::new();
    let dec = Decoder::new(&mut store, "decoder", 3, &cfg.model.decoder, &mut rng);
    let pitch = vec![PitchTrack::from_hz(&[0.0, 180.0])];
    let err = check(&store, random(&[1, 2, 3], &mut rng), |g, p, x| dec.forward(g, p, x, &pitch));
    assert!(err < 1e-4, "{err:e}");
}
