use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{
    input_from_features, Arch, Gradients, HeadGrads, NetworkOutput, NetworkParams, NnError, Scalar, DENSE_B, DENSE_W, POLICY_B, POLICY_W, TP_B, TP_W,
    VALUE_B, VALUE_W,
};
use crate::env::{Action, FeatureStack};

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ActivationCache<T> {
    version: u64,
    arch: Arch,
    input: Vec<T>,
    conv_pre: [Vec<T>; 4],
    conv_out: [Vec<T>; 4],
    dense_pre: Vec<T>,
    dense_out: Vec<T>,
    pub output: NetworkOutput<T>,
}

impl<T: Scalar> ActivationCache<T> {
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Inputs of every ELU in the network, conv layers first.
    pub fn pre_activations(&self) -> impl Iterator<Item = &T> {
        self.conv_pre.iter().flatten().chain(&self.dense_pre)
    }
}

#[inline]
fn elu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
fn elu_grad<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        x.exp()
    }
}

/// Valid output range along one axis for a kernel offset `d` in {-1, 0, 1}.
#[inline]
fn span(n: usize, d: isize) -> (usize, usize) {
    let lo = if d < 0 { 1 } else { 0 };
    let hi = if d > 0 { n - 1 } else { n };
    (lo, hi)
}

/// 3x3 convolution, stride 1, zero padding 1.
fn conv_forward<T: Scalar>(input: &[T], cin: usize, w: &[T], b: &[T], cout: usize, n: usize, out: &mut [T]) {
    let plane = n * n;
    for o in 0..cout {
        let dst = &mut out[o * plane..(o + 1) * plane];
        dst.fill(b[o]);
        for i in 0..cin {
            let src = &input[i * plane..(i + 1) * plane];
            let kernel = &w[(o * cin + i) * 9..(o * cin + i + 1) * 9];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = span(n, dy);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = span(n, dx);
                    let wv = kernel[ky * 3 + kx];
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let sx0 = (x0 as isize + dx) as usize;
                        let drow = &mut dst[y * n + x0..y * n + x1];
                        let srow = &src[sy * n + sx0..sy * n + sx0 + (x1 - x0)];
                        for (d, s) in drow.iter_mut().zip(srow) {
                            *d += wv * *s;
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates weight/bias gradients and, when requested, the input gradient.
#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Scalar>(
    input: &[T],
    cin: usize,
    w: &[T],
    cout: usize,
    n: usize,
    d_pre: &[T],
    dw: &mut [T],
    db: &mut [T],
    mut d_in: Option<&mut [T]>,
) {
    let plane = n * n;
    for o in 0..cout {
        let g = &d_pre[o * plane..(o + 1) * plane];
        let mut bsum = T::zero();
        for v in g {
            bsum += *v;
        }
        db[o] += bsum;
        for i in 0..cin {
            let src = &input[i * plane..(i + 1) * plane];
            let base = (o * cin + i) * 9;
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = span(n, dy);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = span(n, dx);
                    let wv = w[base + ky * 3 + kx];
                    let mut acc = T::zero();
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let sx0 = (x0 as isize + dx) as usize;
                        let grow = &g[y * n + x0..y * n + x1];
                        let srow = &src[sy * n + sx0..sy * n + sx0 + (x1 - x0)];
                        for (gv, s) in grow.iter().zip(srow) {
                            acc += *gv * *s;
                        }
                        if let Some(d_in) = d_in.as_deref_mut() {
                            let dst = &mut d_in[i * plane + sy * n + sx0..i * plane + sy * n + sx0 + (x1 - x0)];
                            for (d, gv) in dst.iter_mut().zip(grow) {
                                *d += wv * *gv;
                            }
                        }
                    }
                    dw[base + ky * 3 + kx] += acc;
                }
            }
        }
    }
}

impl<T: Scalar> NetworkParams<T> {
    fn check_input(&self, len: usize) -> Result<(), NnError> {
        let expected = self.arch.in_channels * self.arch.board * self.arch.board;
        if len != expected {
            return Err(NnError::Shape(format!(
                "input has {len} values, network expects {} channels of {}x{} = {expected}",
                self.arch.in_channels, self.arch.board, self.arch.board
            )));
        }
        Ok(())
    }

    /// Full forward pass over a flat channel-major input.
    pub fn forward(&self, input: &[T]) -> Result<(NetworkOutput<T>, ActivationCache<T>), NnError> {
        self.check_input(input.len())?;
        let arch = self.arch;
        let n = arch.board;
        let plane = n * n;

        let mut conv_pre: [Vec<T>; 4] = Default::default();
        let mut conv_out: [Vec<T>; 4] = Default::default();
        let mut cin = arch.in_channels;
        for l in 0..4 {
            let cout = arch.conv[l];
            let mut pre = vec![T::zero(); cout * plane];
            let src = if l == 0 { input } else { &conv_out[l - 1][..] };
            conv_forward(src, cin, &self.tensors[2 * l].data, &self.tensors[2 * l + 1].data, cout, n, &mut pre);
            conv_out[l] = pre.iter().map(|v| elu(*v)).collect();
            conv_pre[l] = pre;
            cin = cout;
        }

        let flat = &conv_out[3];
        let fl = flat.len();
        let dw = &self.tensors[DENSE_W].data;
        let dense_pre: Vec<T> = (0..arch.hidden)
            .map(|h| {
                let row = &dw[h * fl..(h + 1) * fl];
                let mut acc = self.tensors[DENSE_B].data[h];
                for (wv, x) in row.iter().zip(flat) {
                    acc += *wv * *x;
                }
                acc
            })
            .collect();
        let dense_out: Vec<T> = dense_pre.iter().map(|v| elu(*v)).collect();

        let head = |w: usize, b: usize, row: usize| {
            let weights = &self.tensors[w].data[row * arch.hidden..(row + 1) * arch.hidden];
            let mut acc = self.tensors[b].data[row];
            for (wv, x) in weights.iter().zip(&dense_out) {
                acc += *wv * *x;
            }
            acc
        };
        let mut logits = [T::zero(); Action::COUNT];
        for (a, l) in logits.iter_mut().enumerate() {
            *l = head(POLICY_W, POLICY_B, a);
        }
        let policy = softmax(&logits);
        let value = head(VALUE_W, VALUE_B, 0);
        let tp_logit = head(TP_W, TP_B, 0);
        let terminal_pred = T::one() / (T::one() + (-tp_logit).exp());
        let output = NetworkOutput { policy, value, terminal_pred };

        let cache = ActivationCache { version: self.version, arch, input: input.to_vec(), conv_pre, conv_out, dense_pre, dense_out, output };
        Ok((output, cache))
    }

    pub fn forward_features(&self, fs: &FeatureStack) -> Result<(NetworkOutput<T>, ActivationCache<T>), NnError> {
        self.forward(&input_from_features(fs))
    }

    /// Forward pass without keeping the cache.
    pub fn predict(&self, fs: &FeatureStack) -> Result<NetworkOutput<T>, NnError> {
        self.forward_features(fs).map(|(o, _)| o)
    }

    /// Gradients of a loss whose partials w.r.t. the head outputs are `head`.
    pub fn backward(&self, cache: &ActivationCache<T>, head: &HeadGrads<T>) -> Result<Gradients<T>, NnError> {
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(cache, head, &mut grads)?;
        Ok(grads)
    }

    /// Like [`backward`](Self::backward) but accumulates into `grads`.
    pub fn backward_into(&self, cache: &ActivationCache<T>, head: &HeadGrads<T>, grads: &mut Gradients<T>) -> Result<(), NnError> {
        if cache.version != self.version || cache.arch != self.arch {
            return Err(NnError::StaleCache { cache: cache.version, params: self.version });
        }
        if grads.tensors.len() != self.tensors.len() {
            return Err(NnError::Shape(format!("gradient buffer has {} tensors", grads.tensors.len())));
        }
        if head.is_zero() {
            return Ok(());
        }
        let arch = self.arch;
        let hidden = arch.hidden;
        let n = arch.board;
        let plane = n * n;
        let out = &cache.output;

        // Softmax and sigmoid Jacobians.
        let mut gsum = T::zero();
        for a in 0..Action::COUNT {
            gsum += head.policy[a] * out.policy[a];
        }
        let mut dlogit = [T::zero(); Action::COUNT];
        for a in 0..Action::COUNT {
            dlogit[a] = out.policy[a] * (head.policy[a] - gsum);
        }
        let dv = head.value;
        let dtp = head.tp * out.terminal_pred * (T::one() - out.terminal_pred);

        let h = &cache.dense_out;
        let mut dh = vec![T::zero(); hidden];
        for (a, &dl) in dlogit.iter().enumerate() {
            let w = &self.tensors[POLICY_W].data[a * hidden..(a + 1) * hidden];
            let gw = &mut grads.tensors[POLICY_W].data[a * hidden..(a + 1) * hidden];
            for k in 0..hidden {
                gw[k] += dl * h[k];
                dh[k] += w[k] * dl;
            }
            grads.tensors[POLICY_B].data[a] += dl;
        }
        for (wi, bi, d) in [(VALUE_W, VALUE_B, dv), (TP_W, TP_B, dtp)] {
            for k in 0..hidden {
                grads.tensors[wi].data[k] += d * h[k];
                dh[k] += self.tensors[wi].data[k] * d;
            }
            grads.tensors[bi].data[0] += d;
        }

        let flat = &cache.conv_out[3];
        let fl = flat.len();
        let mut dflat = vec![T::zero(); fl];
        for k in 0..hidden {
            let d = dh[k] * elu_grad(cache.dense_pre[k]);
            grads.tensors[DENSE_B].data[k] += d;
            let w = &self.tensors[DENSE_W].data[k * fl..(k + 1) * fl];
            let gw = &mut grads.tensors[DENSE_W].data[k * fl..(k + 1) * fl];
            for j in 0..fl {
                gw[j] += d * flat[j];
                dflat[j] += w[j] * d;
            }
        }

        let mut d_out = dflat;
        for l in (0..4).rev() {
            let cout = arch.conv[l];
            let cin = if l == 0 { arch.in_channels } else { arch.conv[l - 1] };
            let d_pre: Vec<T> = d_out.iter().zip(&cache.conv_pre[l]).map(|(g, x)| *g * elu_grad(*x)).collect();
            let input = if l == 0 { &cache.input[..] } else { &cache.conv_out[l - 1][..] };
            let (wslot, bslot) = (2 * l, 2 * l + 1);
            let mut d_in = if l > 0 { vec![T::zero(); cin * plane] } else { Vec::new() };
            let (lo, hi) = grads.tensors.split_at_mut(bslot);
            conv_backward(
                input,
                cin,
                &self.tensors[wslot].data,
                cout,
                n,
                &d_pre,
                &mut lo[wslot].data,
                &mut hi[0].data,
                if l > 0 { Some(&mut d_in[..]) } else { None },
            );
            d_out = d_in;
        }
        Ok(())
    }
}

fn softmax<T: Scalar>(logits: &[T; Action::COUNT]) -> [T; Action::COUNT] {
    let mut max = logits[0];
    for &l in &logits[1..] {
        if l > max {
            max = l;
        }
    }
    let mut out = [T::zero(); Action::COUNT];
    let mut sum = T::zero();
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::CHANNELS;
    use rand::Rng;

    fn random_input(arch: &Arch, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng_from_seed(seed);
        (0..arch.in_channels * arch.board * arch.board).map(|_| rng.gen_range(0.0..1.0)).collect()
    }

    #[test]
    fn zero_network_outputs_uniform_half() {
        let p = NetworkParams::<f64>::zeros(Arch::narrow(6, 3, 5));
        let input = random_input(&p.arch, 1);
        let (out, _) = p.forward(&input).unwrap();
        for v in out.policy {
            assert_eq!(v, 1.0 / 6.0);
        }
        assert_eq!(out.value, 0.0);
        assert_eq!(out.terminal_pred, 0.5);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let p = NetworkParams::<f32>::zeros(Arch::narrow(6, 2, 2));
        assert!(matches!(p.forward(&[0.0; 10]), Err(NnError::Shape(_))));
    }

    #[test]
    fn zero_head_grads_give_zero_gradients() {
        let p = NetworkParams::<f64>::init(Arch::narrow(6, 3, 5), 3);
        let (_, cache) = p.forward(&random_input(&p.arch, 2)).unwrap();
        let g = p.backward(&cache, &HeadGrads::zero()).unwrap();
        assert!(g.flat().all(|v| *v == 0.0));
    }

    #[test]
    fn stale_cache_rejected() {
        let mut p = NetworkParams::<f64>::init(Arch::narrow(6, 2, 3), 3);
        let (_, cache) = p.forward(&random_input(&p.arch, 2)).unwrap();
        p.version += 1;
        assert_eq!(p.backward(&cache, &HeadGrads::zero()).unwrap_err(), NnError::StaleCache { cache: 0, params: 1 });
    }

    #[test]
    fn value_grad_does_not_touch_policy_head() {
        let p = NetworkParams::<f64>::init(Arch::narrow(6, 3, 5), 4);
        let (_, cache) = p.forward(&random_input(&p.arch, 5)).unwrap();
        let head = HeadGrads { value: 1.3, ..HeadGrads::zero() };
        let g = p.backward(&cache, &head).unwrap();
        assert!(g.tensors[POLICY_W].data.iter().all(|v| *v == 0.0));
        assert!(g.tensors[POLICY_B].data.iter().all(|v| *v == 0.0));
        assert!(g.tensors[TP_W].data.iter().all(|v| *v == 0.0));
        assert!(g.tensors[VALUE_W].data.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let l: [f64; 6] = [0.3, -1.2, 2.0, 0.0, 0.7, -0.4];
        let a = softmax(&l);
        let b = softmax(&l.map(|v| v + 17.5));
        for i in 0..6 {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standard_arch_runs_on_8x8() {
        let p = NetworkParams::<f32>::init(Arch::standard(8), 1);
        let fs = crate::env::encode_observation(&crate::env::generate_board(1, 8).unwrap(), 0);
        assert_eq!(fs.data.len(), CHANNELS * 64);
        let out = p.predict(&fs).unwrap();
        assert!((out.policy.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert!(out.terminal_pred > 0.0 && out.terminal_pred < 1.0);
    }
}
