use crate::error::{Error, Result};
use crate::tensorcore::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Closure computing parent gradients from (parent values, node value, node grad).
type BackFn = Box<dyn Fn(&[&Tensor], &Tensor, &Tensor) -> Vec<Tensor>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    back: Option<BackFn>,
}

/// Per-forward-pass computation record.
///
/// Operations append nodes; [`Graph::backward`] walks the record in reverse
/// and returns one gradient tensor per reachable node. The record is not
/// persistent: build, run backward, drop.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by a backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

const NORM_EPS: f64 = 1e-12;

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, parents: Vec<usize>, back: Option<BackFn>) -> Var {
        self.nodes.push(Node {
            value,
            parents,
            back,
        });
        Var(self.nodes.len() - 1)
    }

    /// Insert a constant/input node. Gradients flow to it like any other node.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, vec![], None)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(Error::Contract(format!(
                "add: shape {:?} vs {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let mut out = va.clone();
        out.add_assign(vb);
        Ok(self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(|_, _, g| vec![g.clone(), g.clone()])),
        ))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.nodes[a.0].value.map(|v| v * c);
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |_, _, g| vec![g.map(|v| v * c)])),
        )
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.nodes[a.0].value.map(|v| v + c);
        self.push(out, vec![a.0], Some(Box::new(|_, _, g| vec![g.clone()])))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(Error::Contract(format!(
                "mul: shape {:?} vs {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let data: Vec<f64> = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(|ps, _, g| {
                let (va, vb) = (ps[0], ps[1]);
                let ga: Vec<f64> = g.data().iter().zip(vb.data()).map(|(g, y)| g * y).collect();
                let gb: Vec<f64> = g.data().iter().zip(va.data()).map(|(g, x)| g * x).collect();
                vec![
                    Tensor::new(va.shape().to_vec(), ga).unwrap(),
                    Tensor::new(vb.shape().to_vec(), gb).unwrap(),
                ]
            })),
        ))
    }

    /// Elementwise max(x, 0). Subgradient 0 at exactly 0.
    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.map(|v| v.max(0.0));
        self.push(
            out,
            vec![a.0],
            Some(Box::new(|ps, _, g| {
                let x = ps[0];
                let data: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                vec![Tensor::new(x.shape().to_vec(), data).unwrap()]
            })),
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.nodes[a.0].value.data().iter().sum();
        self.push(
            Tensor::scalar(s),
            vec![a.0],
            Some(Box::new(|ps, _, g| {
                vec![Tensor::full(ps[0].shape(), g.item())]
            })),
        )
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].value.len() as f64;
        let s: f64 = self.nodes[a.0].value.data().iter().sum();
        self.push(
            Tensor::scalar(s / n),
            vec![a.0],
            Some(Box::new(move |ps, _, g| {
                vec![Tensor::full(ps[0].shape(), g.item() / n)]
            })),
        )
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.map(f64::exp);
        self.push(
            out,
            vec![a.0],
            Some(Box::new(|_, out, g| {
                let data: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(g, y)| g * y)
                    .collect();
                vec![Tensor::new(out.shape().to_vec(), data).unwrap()]
            })),
        )
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        let x = &self.nodes[a.0].value;
        if x.data().iter().any(|&v| v <= 0.0) {
            return Err(Error::Contract("ln: non-positive input".into()));
        }
        let out = x.map(f64::ln);
        Ok(self.push(
            out,
            vec![a.0],
            Some(Box::new(|ps, _, g| {
                let x = ps[0];
                let data: Vec<f64> = g.data().iter().zip(x.data()).map(|(g, x)| g / x).collect();
                vec![Tensor::new(x.shape().to_vec(), data).unwrap()]
            })),
        ))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.map(stable_sigmoid);
        self.push(
            out,
            vec![a.0],
            Some(Box::new(|_, out, g| {
                let data: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                vec![Tensor::new(out.shape().to_vec(), data).unwrap()]
            })),
        )
    }

    /// out = weight · x + bias, with x: N, weight: MxN, bias: M.
    pub fn affine(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let (vx, vw, vb) = (
            &self.nodes[x.0].value,
            &self.nodes[weight.0].value,
            &self.nodes[bias.0].value,
        );
        if vx.shape().len() != 1 || vw.shape().len() != 2 || vb.shape().len() != 1 {
            return Err(Error::Contract(format!(
                "affine: expected vector/matrix/vector, got {:?}/{:?}/{:?}",
                vx.shape(),
                vw.shape(),
                vb.shape()
            )));
        }
        let (m, n) = (vw.shape()[0], vw.shape()[1]);
        if vx.shape()[0] != n {
            return Err(Error::Contract(format!(
                "affine: input dim {} does not match weight columns {}",
                vx.shape()[0],
                n
            )));
        }
        if vb.shape()[0] != m {
            return Err(Error::Contract(format!(
                "affine: bias dim {} does not match weight rows {}",
                vb.shape()[0],
                m
            )));
        }
        let mut out = vec![0.0; m];
        for i in 0..m {
            let row = &vw.data()[i * n..(i + 1) * n];
            let mut acc = vb.data()[i];
            for (w, x) in row.iter().zip(vx.data()) {
                acc += w * x;
            }
            out[i] = acc;
        }
        Ok(self.push(
            Tensor::new(vec![m], out)?,
            vec![x.0, weight.0, bias.0],
            Some(Box::new(move |ps, _, g| {
                let (vx, vw) = (ps[0], ps[1]);
                let mut gx = vec![0.0; n];
                let mut gw = vec![0.0; m * n];
                for i in 0..m {
                    let gi = g.data()[i];
                    let row = &vw.data()[i * n..(i + 1) * n];
                    for j in 0..n {
                        gx[j] += gi * row[j];
                        gw[i * n + j] = gi * vx.data()[j];
                    }
                }
                vec![
                    Tensor::new(vec![n], gx).unwrap(),
                    Tensor::new(vec![m, n], gw).unwrap(),
                    g.clone(),
                ]
            })),
        ))
    }

    /// Direct cross-correlation. input: CxHxW, kernel: OxCxKhxKw, bias: O.
    /// Zero padding, H' = floor((H+2p-Kh)/stride)+1.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (vi, vk, vb) = (
            &self.nodes[input.0].value,
            &self.nodes[kernel.0].value,
            &self.nodes[bias.0].value,
        );
        if stride == 0 {
            return Err(Error::Contract("conv2d: stride must be positive".into()));
        }
        if vi.shape().len() != 3 {
            return Err(Error::Contract(format!(
                "conv2d: input must be CxHxW, got {:?}",
                vi.shape()
            )));
        }
        if vk.shape().len() != 4 {
            return Err(Error::Contract(format!(
                "conv2d: kernel must be OxCxKhxKw, got {:?}",
                vk.shape()
            )));
        }
        let (c, h, w) = (vi.shape()[0], vi.shape()[1], vi.shape()[2]);
        let (o, kc, kh, kw) = (vk.shape()[0], vk.shape()[1], vk.shape()[2], vk.shape()[3]);
        if kc != c {
            return Err(Error::Contract(format!(
                "conv2d: kernel channel dim {kc} does not match input channels {c}"
            )));
        }
        if vb.shape() != [o] {
            return Err(Error::Contract(format!(
                "conv2d: bias shape {:?} does not match output channels {o}",
                vb.shape()
            )));
        }
        if kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(Error::Contract(format!(
                "conv2d: kernel {kh}x{kw} exceeds padded input {}x{}",
                h + 2 * padding,
                w + 2 * padding
            )));
        }
        let oh = (h + 2 * padding - kh) / stride + 1;
        let ow = (w + 2 * padding - kw) / stride + 1;
        let out = conv2d_forward(vi, vk, vb, stride, padding, oh, ow);
        Ok(self.push(
            out,
            vec![input.0, kernel.0, bias.0],
            Some(Box::new(move |ps, _, g| {
                conv2d_backward(ps[0], ps[1], g, stride, padding, oh, ow)
            })),
        ))
    }

    /// Per-channel learned scale and shift: y[c,h,w] = x[c,h,w]*gamma[c] + beta[c].
    pub fn channel_affine(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (vx, vg, vb) = (
            &self.nodes[x.0].value,
            &self.nodes[gamma.0].value,
            &self.nodes[beta.0].value,
        );
        if vx.shape().len() != 3 {
            return Err(Error::Contract(format!(
                "channel_affine: input must be CxHxW, got {:?}",
                vx.shape()
            )));
        }
        let (c, h, w) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        if vg.shape() != [c] || vb.shape() != [c] {
            return Err(Error::Contract(format!(
                "channel_affine: scale/shift shapes {:?}/{:?} do not match {c} channels",
                vg.shape(),
                vb.shape()
            )));
        }
        let plane = h * w;
        let mut out = vec![0.0; c * plane];
        for ch in 0..c {
            let (s, t) = (vg.data()[ch], vb.data()[ch]);
            for i in 0..plane {
                out[ch * plane + i] = vx.data()[ch * plane + i] * s + t;
            }
        }
        Ok(self.push(
            Tensor::new(vec![c, h, w], out)?,
            vec![x.0, gamma.0, beta.0],
            Some(Box::new(move |ps, _, g| {
                let vx = ps[0];
                let vg = ps[1];
                let mut gx = vec![0.0; c * plane];
                let mut gg = vec![0.0; c];
                let mut gb = vec![0.0; c];
                for ch in 0..c {
                    let s = vg.data()[ch];
                    for i in 0..plane {
                        let gi = g.data()[ch * plane + i];
                        gx[ch * plane + i] = gi * s;
                        gg[ch] += gi * vx.data()[ch * plane + i];
                        gb[ch] += gi;
                    }
                }
                vec![
                    Tensor::new(vec![c, h, w], gx).unwrap(),
                    Tensor::new(vec![c], gg).unwrap(),
                    Tensor::new(vec![c], gb).unwrap(),
                ]
            })),
        ))
    }

    /// 2x2 average pooling, stride 2. Odd trailing row/column is dropped
    /// (and receives zero gradient).
    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let vx = &self.nodes[x.0].value;
        if vx.shape().len() != 3 {
            return Err(Error::Contract(format!(
                "avg_pool2: input must be CxHxW, got {:?}",
                vx.shape()
            )));
        }
        let (c, h, w) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(Error::Contract(format!(
                "avg_pool2: input {h}x{w} too small to pool"
            )));
        }
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = 0.0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            acc += vx.data()[ch * h * w + (2 * y + dy) * w + 2 * xx + dx];
                        }
                    }
                    out[ch * oh * ow + y * ow + xx] = acc * 0.25;
                }
            }
        }
        Ok(self.push(
            Tensor::new(vec![c, oh, ow], out)?,
            vec![x.0],
            Some(Box::new(move |_, _, g| {
                let mut gx = vec![0.0; c * h * w];
                for ch in 0..c {
                    for y in 0..oh {
                        for xx in 0..ow {
                            let gi = g.data()[ch * oh * ow + y * ow + xx] * 0.25;
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    gx[ch * h * w + (2 * y + dy) * w + 2 * xx + dx] = gi;
                                }
                            }
                        }
                    }
                }
                vec![Tensor::new(vec![c, h, w], gx).unwrap()]
            })),
        ))
    }

    /// Spatial mean per channel: CxHxW -> C. Works for any H, W >= 1.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let vx = &self.nodes[x.0].value;
        if vx.shape().len() != 3 {
            return Err(Error::Contract(format!(
                "global_avg_pool: input must be CxHxW, got {:?}",
                vx.shape()
            )));
        }
        let (c, h, w) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        let plane = h * w;
        let mut out = vec![0.0; c];
        for ch in 0..c {
            let mut acc = 0.0;
            for i in 0..plane {
                acc += vx.data()[ch * plane + i];
            }
            out[ch] = acc / plane as f64;
        }
        Ok(self.push(
            Tensor::new(vec![c], out)?,
            vec![x.0],
            Some(Box::new(move |_, _, g| {
                let mut gx = vec![0.0; c * plane];
                for ch in 0..c {
                    let gi = g.data()[ch] / plane as f64;
                    gx[ch * plane..(ch + 1) * plane]
                        .iter_mut()
                        .for_each(|v| *v = gi);
                }
                vec![Tensor::new(vec![c, h, w], gx).unwrap()]
            })),
        ))
    }

    /// Reflect-pad a CxHxW tensor by `pad` on every spatial side (edge
    /// sample repeated). Keeps constant planes constant, unlike zero fill.
    pub fn reflect_pad(&mut self, x: Var, pad: usize) -> Result<Var> {
        let vx = &self.nodes[x.0].value;
        if vx.shape().len() != 3 {
            return Err(Error::Contract(format!(
                "reflect_pad: input must be CxHxW, got {:?}",
                vx.shape()
            )));
        }
        if pad == 0 {
            return Ok(x);
        }
        let (c, h, w) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        let (oh, ow) = (h + 2 * pad, w + 2 * pad);
        let mirror = |mut i: isize, n: usize| -> usize {
            let n = n as isize;
            loop {
                if i < 0 {
                    i = -i - 1;
                } else if i >= n {
                    i = 2 * n - 1 - i;
                } else {
                    return i as usize;
                }
            }
        };
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                let sy = mirror(y as isize - pad as isize, h);
                for xx in 0..ow {
                    let sx = mirror(xx as isize - pad as isize, w);
                    out[(ch * oh + y) * ow + xx] = vx.data()[(ch * h + sy) * w + sx];
                }
            }
        }
        Ok(self.push(
            Tensor::new(vec![c, oh, ow], out)?,
            vec![x.0],
            Some(Box::new(move |_, _, g| {
                let mut gx = vec![0.0; c * h * w];
                for ch in 0..c {
                    for y in 0..oh {
                        let sy = mirror(y as isize - pad as isize, h);
                        for xx in 0..ow {
                            let sx = mirror(xx as isize - pad as isize, w);
                            gx[(ch * h + sy) * w + sx] += g.data()[(ch * oh + y) * ow + xx];
                        }
                    }
                }
                vec![Tensor::new(vec![c, h, w], gx).unwrap()]
            })),
        ))
    }

    /// x / ||x||. Errors on near-zero vectors instead of clamping.
    pub fn l2_normalize(&mut self, x: Var) -> Result<Var> {
        let vx = &self.nodes[x.0].value;
        let norm = vx.norm();
        if norm <= NORM_EPS {
            return Err(Error::DegenerateInput(format!(
                "l2_normalize: vector norm {norm:.3e} below {NORM_EPS:.0e}"
            )));
        }
        let out = vx.map(|v| v / norm);
        Ok(self.push(
            out,
            vec![x.0],
            Some(Box::new(move |ps, _, g| {
                let x = ps[0];
                let dot: f64 = x.data().iter().zip(g.data()).map(|(x, g)| x * g).sum();
                let n3 = norm * norm * norm;
                let data: Vec<f64> = x
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(x, g)| g / norm - x * dot / n3)
                    .collect();
                vec![Tensor::new(x.shape().to_vec(), data).unwrap()]
            })),
        ))
    }

    /// Cosine similarity of two equal-length vectors, as a scalar node.
    pub fn cos_sim(&mut self, u: Var, v: Var) -> Result<Var> {
        let (vu, vv) = (&self.nodes[u.0].value, &self.nodes[v.0].value);
        if vu.shape() != vv.shape() {
            return Err(Error::Contract(format!(
                "cos_sim: shape {:?} vs {:?}",
                vu.shape(),
                vv.shape()
            )));
        }
        let nu = vu.norm();
        let nv = vv.norm();
        if nu <= NORM_EPS || nv <= NORM_EPS {
            return Err(Error::DegenerateInput(format!(
                "cos_sim: vector norm {:.3e} below {NORM_EPS:.0e}",
                nu.min(nv)
            )));
        }
        let dot: f64 = vu.data().iter().zip(vv.data()).map(|(a, b)| a * b).sum();
        let s = dot / (nu * nv);
        Ok(self.push(
            Tensor::scalar(s),
            vec![u.0, v.0],
            Some(Box::new(move |ps, _, g| {
                let (vu, vv) = (ps[0], ps[1]);
                let gi = g.item();
                let gu: Vec<f64> = vu
                    .data()
                    .iter()
                    .zip(vv.data())
                    .map(|(u, v)| gi * (v / (nu * nv) - s * u / (nu * nu)))
                    .collect();
                let gv: Vec<f64> = vu
                    .data()
                    .iter()
                    .zip(vv.data())
                    .map(|(u, v)| gi * (u / (nu * nv) - s * v / (nv * nv)))
                    .collect();
                vec![
                    Tensor::new(vu.shape().to_vec(), gu).unwrap(),
                    Tensor::new(vv.shape().to_vec(), gv).unwrap(),
                ]
            })),
        ))
    }

    /// Sum of scalar nodes.
    pub fn sum_vars(&mut self, vars: &[Var]) -> Result<Var> {
        if vars.is_empty() {
            return Err(Error::Contract("sum_vars: empty operand list".into()));
        }
        let mut acc = 0.0;
        for v in vars {
            let t = &self.nodes[v.0].value;
            if !t.is_scalar() {
                return Err(Error::Contract(format!(
                    "sum_vars: operand shape {:?} is not scalar",
                    t.shape()
                )));
            }
            acc += t.item();
        }
        let parents: Vec<usize> = vars.iter().map(|v| v.0).collect();
        let n = vars.len();
        Ok(self.push(
            Tensor::scalar(acc),
            parents,
            Some(Box::new(move |_, _, g| {
                (0..n).map(|_| Tensor::scalar(g.item())).collect()
            })),
        ))
    }

    /// Numerically stable binary cross-entropy from a logit:
    /// max(z,0) - z*label + ln(1 + exp(-|z|)).
    pub fn bce_with_logit(&mut self, logit: Var, label: f64) -> Result<Var> {
        let vz = &self.nodes[logit.0].value;
        if !vz.is_scalar() {
            return Err(Error::Contract(format!(
                "bce_with_logit: logit shape {:?} is not scalar",
                vz.shape()
            )));
        }
        if label != 0.0 && label != 1.0 {
            return Err(Error::Contract(format!(
                "bce_with_logit: label must be 0 or 1, got {label}"
            )));
        }
        let z = vz.item();
        let loss = z.max(0.0) - z * label + (-z.abs()).exp().ln_1p();
        Ok(self.push(
            Tensor::scalar(loss),
            vec![logit.0],
            Some(Box::new(move |ps, _, g| {
                let z = ps[0].item();
                // preserve the parent's shape ([] or [1])
                vec![ps[0].map(|_| g.item() * (stable_sigmoid(z) - label))]
            })),
        ))
    }

    /// Reverse-mode pass from a scalar loss node; repeated calls on fresh
    /// graphs let the caller accumulate into Parameter.grad additively.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = &self.nodes[loss.0].value;
        if !lv.is_scalar() {
            return Err(Error::Contract(format!(
                "backward: loss must be scalar, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if let Some(back) = &self.nodes[i].back {
                let parent_vals: Vec<&Tensor> = self.nodes[i]
                    .parents
                    .iter()
                    .map(|&p| &self.nodes[p].value)
                    .collect();
                let pgrads = back(&parent_vals, &self.nodes[i].value, &g);
                debug_assert_eq!(pgrads.len(), self.nodes[i].parents.len());
                for (p, pg) in self.nodes[i].parents.iter().zip(pgrads) {
                    match &mut grads[*p] {
                        Some(acc) => acc.add_assign(&pg),
                        slot => *slot = Some(pg),
                    }
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

pub(crate) fn stable_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn conv2d_forward(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
) -> Tensor {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (o, _, kh, kw) = (
        kernel.shape()[0],
        kernel.shape()[1],
        kernel.shape()[2],
        kernel.shape()[3],
    );
    let mut out = vec![0.0; o * oh * ow];
    let ind = input.data();
    let kd = kernel.data();
    for oc in 0..o {
        let plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
        plane.iter_mut().for_each(|v| *v = bias.data()[oc]);
        for ic in 0..c {
            let ip = &ind[ic * h * w..(ic + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let kv = kd[((oc * c + ic) * kh + ky) * kw + kx];
                    if kv == 0.0 {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = &ip[iy as usize * w..(iy as usize + 1) * w];
                        let orow = &mut plane[oy * ow..(oy + 1) * ow];
                        for (ox, ov) in orow.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            *ov += kv * row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![o, oh, ow], out).expect("conv2d forward produced non-finite values")
}

fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
) -> Vec<Tensor> {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (o, _, kh, kw) = (
        kernel.shape()[0],
        kernel.shape()[1],
        kernel.shape()[2],
        kernel.shape()[3],
    );
    let mut gin = vec![0.0; c * h * w];
    let mut gk = vec![0.0; o * c * kh * kw];
    let mut gb = vec![0.0; o];
    let ind = input.data();
    let kd = kernel.data();
    let gd = grad_out.data();
    for oc in 0..o {
        let gplane = &gd[oc * oh * ow..(oc + 1) * oh * ow];
        gb[oc] = gplane.iter().sum();
        for ic in 0..c {
            let ip = &ind[ic * h * w..(ic + 1) * h * w];
            let gip = &mut gin[ic * h * w..(ic + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let kidx = ((oc * c + ic) * kh + ky) * kw + kx;
                    let kv = kd[kidx];
                    let mut kacc = 0.0;
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let base = iy as usize * w;
                        let grow = &gplane[oy * ow..(oy + 1) * ow];
                        for (ox, gv) in grow.iter().enumerate() {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            kacc += gv * ip[base + ix as usize];
                            gip[base + ix as usize] += gv * kv;
                        }
                    }
                    gk[kidx] += kacc;
                }
            }
        }
    }
    vec![
        Tensor::new(vec![c, h, w], gin).unwrap(),
        Tensor::new(vec![o, c, kh, kw], gk).unwrap(),
        Tensor::new(vec![o], gb).unwrap(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorcore::{finite_difference_check, RngStream};

    fn t3(c: usize, h: usize, w: usize, data: Vec<f64>) -> Tensor {
        Tensor::new(vec![c, h, w], data).unwrap()
    }

    #[test]
    fn conv2d_identity_kernel() {
        let mut g = Graph::new();
        let input = g.leaf(t3(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let k = g.leaf(Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap());
        let b = g.leaf(Tensor::vector(vec![0.0]));
        let out = g.conv2d(input, k, b, 1, 0).unwrap();
        assert_eq!(g.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn conv2d_box_kernel_on_constant_input() {
        // 3x3 all-ones kernel, stride 1, pad 1, constant-1 4x4 input:
        // interior 9, edges 6, corners 4.
        let mut g = Graph::new();
        let input = g.leaf(Tensor::full(&[1, 4, 4], 1.0));
        let k = g.leaf(Tensor::full(&[1, 1, 3, 3], 1.0));
        let b = g.leaf(Tensor::vector(vec![0.0]));
        let out = g.conv2d(input, k, b, 1, 1).unwrap();
        let expected = [
            4.0, 6.0, 6.0, 4.0, //
            6.0, 9.0, 9.0, 6.0, //
            6.0, 9.0, 9.0, 6.0, //
            4.0, 6.0, 6.0, 4.0,
        ];
        assert_eq!(g.value(out).data(), &expected);
    }

    #[test]
    fn conv2d_same_padding_preserves_dims() {
        for k in [1usize, 3, 5] {
            let mut g = Graph::new();
            let input = g.leaf(Tensor::full(&[2, 7, 5], 0.5));
            let kern = g.leaf(Tensor::full(&[3, 2, k, k], 0.1));
            let b = g.leaf(Tensor::zeros(&[3]));
            let out = g.conv2d(input, kern, b, 1, (k - 1) / 2).unwrap();
            assert_eq!(g.value(out).shape(), &[3, 7, 5]);
        }
    }

    #[test]
    fn conv2d_rejects_channel_mismatch() {
        let mut g = Graph::new();
        let input = g.leaf(Tensor::full(&[2, 4, 4], 1.0));
        let k = g.leaf(Tensor::full(&[1, 3, 3, 3], 1.0));
        let b = g.leaf(Tensor::zeros(&[1]));
        let err = g.conv2d(input, k, b, 1, 1).unwrap_err();
        assert!(err.to_string().contains("channel"));
    }

    #[test]
    fn conv2d_distributes_over_input_addition() {
        let mut rng = RngStream::new(11, 0);
        let a: Vec<f64> = (0..2 * 5 * 5).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..2 * 5 * 5).map(|_| rng.normal()).collect();
        let kd: Vec<f64> = (0..3 * 2 * 3 * 3).map(|_| rng.normal()).collect();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let run = |data: Vec<f64>, bias: f64| -> Vec<f64> {
            let mut g = Graph::new();
            let i = g.leaf(t3(2, 5, 5, data));
            let k = g.leaf(Tensor::new(vec![3, 2, 3, 3], kd.clone()).unwrap());
            let bv = g.leaf(Tensor::full(&[3], bias));
            let o = g.conv2d(i, k, bv, 1, 1).unwrap();
            g.value(o).data().to_vec()
        };
        let oa = run(a, 0.7);
        let ob = run(b, 0.0);
        let osum = run(sum, 0.7);
        for ((x, y), s) in oa.iter().zip(&ob).zip(&osum) {
            assert!((x + y - s).abs() < 1e-10);
        }
    }

    #[test]
    fn relu_examples() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![-1.0, 0.0, 2.0]));
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);

        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![-3.0, -0.5]));
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0]);
    }

    #[test]
    fn relu_subgradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![-1.0, 2.0]));
        let y = g.relu(x);
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn global_avg_pool_examples() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::full(&[2, 3, 5], 0.3));
        let y = g.global_avg_pool(x).unwrap();
        assert_eq!(g.value(y).shape(), &[2]);
        assert!((g.value(y).data()[0] - 0.3).abs() < 1e-15);

        let mut g = Graph::new();
        let x = g.leaf(t3(1, 2, 2, vec![0.0, 1.0, 2.0, 3.0]));
        let y = g.global_avg_pool(x).unwrap();
        assert_eq!(g.value(y).data(), &[1.5]);
    }

    #[test]
    fn global_avg_pool_spatial_permutation_invariant() {
        let mut rng = RngStream::new(5, 0);
        let data: Vec<f64> = (0..3 * 4 * 4).map(|_| rng.uniform()).collect();
        let mut permuted = data.clone();
        // permute within each channel plane
        for c in 0..3 {
            let plane = &mut permuted[c * 16..(c + 1) * 16];
            plane.reverse();
            plane.swap(2, 9);
        }
        let pool = |d: Vec<f64>| {
            let mut g = Graph::new();
            let x = g.leaf(t3(3, 4, 4, d));
            let y = g.global_avg_pool(x).unwrap();
            g.value(y).data().to_vec()
        };
        let a = pool(data);
        let b = pool(permuted);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_examples() {
        // identity weight, zero bias
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.5, -2.0]));
        let w = g.leaf(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = g.leaf(Tensor::zeros(&[2]));
        let y = g.affine(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[1.5, -2.0]);

        // weight [[1,1]], bias [0], x=[2,3] -> [5]
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![2.0, 3.0]));
        let w = g.leaf(Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap());
        let b = g.leaf(Tensor::zeros(&[1]));
        let y = g.affine(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[5.0]);

        // zero weight, bias b -> b
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![2.0, 3.0]));
        let w = g.leaf(Tensor::zeros(&[2, 2]));
        let b = g.leaf(Tensor::vector(vec![0.25, -0.5]));
        let y = g.affine(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[0.25, -0.5]);
    }

    #[test]
    fn affine_rejects_dim_mismatch() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let w = g.leaf(Tensor::zeros(&[2, 2]));
        let b = g.leaf(Tensor::zeros(&[2]));
        assert!(g.affine(x, w, b).is_err());
    }

    #[test]
    fn l2_normalize_examples() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![3.0, 4.0]));
        let y = g.l2_normalize(x).unwrap();
        let d = g.value(y).data();
        assert!((d[0] - 0.6).abs() < 1e-12 && (d[1] - 0.8).abs() < 1e-12);
        assert!((g.value(y).norm() - 1.0).abs() < 1e-6);

        // unit vector maps to itself
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![0.0, 1.0, 0.0]));
        let y = g.l2_normalize(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 1.0, 0.0]);

        // zero vector errors
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![0.0, 0.0]));
        assert!(matches!(
            g.l2_normalize(x),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn cos_sim_examples() {
        let sim = |u: Vec<f64>, v: Vec<f64>| {
            let mut g = Graph::new();
            let a = g.leaf(Tensor::vector(u));
            let b = g.leaf(Tensor::vector(v));
            g.cos_sim(a, b).map(|s| g.value(s).item())
        };
        assert!((sim(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap()).abs() < 1e-15);
        assert!((sim(vec![1.0, 2.0], vec![2.0, 4.0]).unwrap() - 1.0).abs() < 1e-12);
        let s = sim(vec![1.0, 1.0], vec![1.0, 0.0]).unwrap();
        assert!((s - 0.70711).abs() < 1e-5);
        assert!(sim(vec![0.0, 0.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn cos_sim_scale_invariance() {
        let mut rng = RngStream::new(9, 3);
        for _ in 0..50 {
            let u: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let v: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let alpha = rng.uniform_range(0.01, 100.0);
            let beta = rng.uniform_range(0.01, 100.0);
            let sim = |u: Vec<f64>, v: Vec<f64>| {
                let mut g = Graph::new();
                let a = g.leaf(Tensor::vector(u));
                let b = g.leaf(Tensor::vector(v));
                let s = g.cos_sim(a, b).unwrap();
                g.value(s).item()
            };
            let s1 = sim(u.clone(), v.clone());
            let s2 = sim(
                u.iter().map(|x| x * alpha).collect(),
                v.iter().map(|x| x * beta).collect(),
            );
            assert!((s1 - s2).abs() < 1e-9, "{s1} vs {s2}");
        }
    }

    #[test]
    fn backward_of_sum_is_all_ones() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::full(&[2, 3], 0.7));
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = g.relu(x);
        assert!(g.backward(y).is_err());
    }

    #[test]
    fn backward_accumulates_through_shared_nodes() {
        // loss = sum(x) + sum(x) -> grad 2 everywhere
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, -1.0]));
        let s1 = g.sum(x);
        let s2 = g.sum(x);
        let tot = g.add(s1, s2).unwrap();
        let grads = g.backward(tot).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn cosine_similarity_gradient_matches_finite_differences() {
        let c = Tensor::vector(vec![0.4, -1.1, 0.9]);
        let f = |x: &Tensor| {
            let mut g = Graph::new();
            let u = g.leaf(x.clone());
            let cv = g.leaf(c.clone());
            let s = g.cos_sim(u, cv).unwrap();
            let grads = g.backward(s).unwrap();
            (g.value(s).item(), grads.wrt(u).unwrap().clone())
        };
        let x = Tensor::vector(vec![1.0, 0.5, -0.3]);
        let err = finite_difference_check(f, &x, 1e-5);
        assert!(err < 1e-4, "err {err}");
    }

    #[test]
    fn bce_with_logit_matches_definition() {
        // score 0.5 (logit 0) -> ln 2
        let mut g = Graph::new();
        let z = g.leaf(Tensor::scalar(0.0));
        let l = g.bce_with_logit(z, 1.0).unwrap();
        assert!((g.value(l).item() - std::f64::consts::LN_2).abs() < 1e-12);

        // large positive logit with label 1 -> loss -> 0
        let mut g = Graph::new();
        let z = g.leaf(Tensor::scalar(30.0));
        let l = g.bce_with_logit(z, 1.0).unwrap();
        assert!(g.value(l).item() < 1e-12);

        // symmetry loss(z, 1) == loss(-z, 0)
        for z in [-2.0, -0.3, 0.0, 1.7] {
            let mut g = Graph::new();
            let a = g.leaf(Tensor::scalar(z));
            let l1 = g.bce_with_logit(a, 1.0).unwrap();
            let b = g.leaf(Tensor::scalar(-z));
            let l0 = g.bce_with_logit(b, 0.0).unwrap();
            assert!((g.value(l1).item() - g.value(l0).item()).abs() < 1e-12);
        }
    }

    #[test]
    fn avg_pool2_halves_dims_and_averages() {
        let mut g = Graph::new();
        let x = g.leaf(t3(1, 2, 4, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]));
        let y = g.avg_pool2(x).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1, 2]);
        assert_eq!(g.value(y).data(), &[3.5, 5.5]);
    }
}
