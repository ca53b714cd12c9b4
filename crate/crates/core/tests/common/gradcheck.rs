//! Backpropagation against central finite differences.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sesim_core::nn::{Cache, Mlp};

const H: f64 = 1e-6;
const FLOOR: f64 = 1e-8;

/// L = Σ c·y + ½Σ y², so ∂L/∂y = c + y.
fn loss(net: &Mlp, x: &[f64], batch: usize, c: &[f64]) -> f64 {
    let mut cache = Cache::default();
    let y = net.forward_batch(x, batch, &mut cache);
    y.iter().zip(c).map(|(y, c)| c * y + 0.5 * y * y).sum()
}

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

/// Largest relative error over every parameter and input coordinate.
pub fn check(net: &mut Mlp, batch: usize, rng: &mut ChaCha8Rng) -> f64 {
    let x: Vec<f64> = (0..batch * net.inputs()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..batch * net.outputs()).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut cache = Cache::default();
    let y = net.forward_batch(&x, batch, &mut cache).to_vec();
    let grad_out: Vec<f64> = y.iter().zip(&c).map(|(y, c)| c + y).collect();
    let mut grads = net.zero_gradients();
    let mut gin = Vec::new();
    net.backward(&cache, &grad_out, &mut grads, Some(&mut gin));
    let analytic: Vec<f64> =
        grads.w.iter().zip(&grads.b).flat_map(|(w, b)| w.iter().chain(b).copied()).collect();

    let p = net.parameters();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let mut q = p.clone();
        q[i] = p[i] + H;
        net.set_parameters(&q).unwrap();
        let up = loss(net, &x, batch, &c);
        q[i] = p[i] - H;
        net.set_parameters(&q).unwrap();
        let down = loss(net, &x, batch, &c);
        worst = worst.max(rel(analytic[i], (up - down) / (2.0 * H)));
    }
    net.set_parameters(&p).unwrap();
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += H;
        let up = loss(net, &xp, batch, &c);
        xp[i] -= 2.0 * H;
        let down = loss(net, &xp, batch, &c);
        worst = worst.max(rel(gin[i], (up - down) / (2.0 * H)));
    }
    worst
}
