//! Q-network construction and the two forward routes.
//!
//! The traced route records on a tape for backprop; the inference route
//! runs the same kernels with no recording. Both produce bit-identical
//! values (asserted in tests), so action selection and target computation
//! stay cheap without forking the math.

use super::config::{Activation, ConvSpec, QNetworkConfig, WidthPolicy};
use crate::error::{Error, Result};
use crate::numerics::{
    conv2d_forward, conv_use_sparse, crelu, matmul_kernel, relu, BufId, ConvGeom, ParamStore,
    Tape, Tensor,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One parameter layer: its name and the weight-tensor entry count
/// (biases are tracked separately and excluded from the count, matching
/// how the diagnostics weight layers against each other).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerInfo {
    pub name: String,
    pub weight_count: usize,
}

/// One probed activation site and its per-sample unit count.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteInfo {
    pub name: String,
    pub units: usize,
}

#[derive(Debug, Clone)]
struct ConvLayer {
    name: String,
    cin: usize,
    cout: usize,
    kernel: usize,
    stride: usize,
    out_h: usize,
    out_w: usize,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct DenseLayer {
    name: String,
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
enum Head {
    Dueling { value: [DenseLayer; 2], adv: [DenseLayer; 2] },
    Single { hidden: DenseLayer, out: DenseLayer },
}

/// Resolved architecture: layer shapes after applying the width policy,
/// plus parameter-store indices.
#[derive(Debug, Clone)]
pub struct QNetwork {
    pub input_shape: (usize, usize, usize),
    pub actions: usize,
    activation: Activation,
    conv: Vec<ConvLayer>,
    head: Head,
    flat_len: usize,
}

/// Feature width after the activation is applied to `pre` units.
fn post_width(activation: Activation, pre: usize) -> usize {
    match activation {
        Activation::Relu => pre,
        Activation::Crelu => 2 * pre,
    }
}

/// Pre-activation width that realizes a baseline width under the policy.
fn pre_width(
    activation: Activation,
    policy: WidthPolicy,
    baseline: usize,
    what: &str,
) -> Result<usize> {
    match (activation, policy) {
        (Activation::Relu, _) | (Activation::Crelu, WidthPolicy::InvariantInput) => Ok(baseline),
        (Activation::Crelu, WidthPolicy::InvariantOutput) => {
            if baseline % 2 != 0 {
                Err(Error::config(format!(
                    "invariant_output requires an even width for {what}, got {baseline}"
                )))
            } else {
                Ok(baseline / 2)
            }
        }
    }
}

/// Build the network and its fan-in-scaled uniform initial weights.
/// Reproducible: the same (config, shapes, seed) gives bit-identical
/// parameters.
pub fn build_network(
    config: &QNetworkConfig,
    input_shape: (usize, usize, usize),
    actions: usize,
    seed: u64,
) -> Result<(QNetwork, ParamStore)> {
    if actions < 2 {
        return Err(Error::config(format!("need at least 2 actions, got {actions}")));
    }
    if config.hidden == 0 {
        return Err(Error::config("hidden width must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    let init_weight = |rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize| -> Tensor {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(|_| rng.gen_range(-bound..bound)).collect(),
        }
    };

    let (c0, mut h, mut w) = input_shape;
    let mut cin = c0;
    let mut conv_layers = Vec::with_capacity(config.conv.len());
    for (i, spec) in config.conv.iter().enumerate() {
        let ConvSpec { channels, kernel, stride } = *spec;
        if kernel == 0 || stride == 0 || channels == 0 {
            return Err(Error::config(format!("conv layer {i}: zero kernel/stride/channels")));
        }
        if h < kernel || w < kernel {
            return Err(Error::config(format!(
                "conv layer {i}: kernel {kernel} does not fit {h}x{w} input"
            )));
        }
        let cout = pre_width(config.activation, config.width_policy, channels, &format!("conv layer {i}"))?;
        let out_h = (h - kernel) / stride + 1;
        let out_w = (w - kernel) / stride + 1;
        // A window layout that skips cells makes parts of the grid
        // invisible to the value function (e.g. the paddle row).
        for (n, label) in [(h, "rows"), (w, "columns")] {
            let covered = kernel >= stride && ((n - kernel) / stride) * stride + kernel >= n;
            if !covered {
                log::warn!(
                    "conv layer {i}: kernel {kernel} stride {stride} leaves input {label} uncovered ({n} wide)"
                );
            }
        }
        let name = format!("conv{}", i + 1);
        let fan_in = cin * kernel * kernel;
        let w_idx = params.push(format!("{name}.w"), init_weight(&mut rng, &[cout, cin, kernel, kernel], fan_in));
        let b_idx = params.push(format!("{name}.b"), Tensor::zeros(&[cout]));
        conv_layers.push(ConvLayer {
            name,
            cin,
            cout,
            kernel,
            stride,
            out_h,
            out_w,
            w: w_idx,
            b: b_idx,
        });
        cin = post_width(config.activation, cout);
        h = out_h;
        w = out_w;
    }
    let flat_len = cin * h * w;

    let dense = |params: &mut ParamStore,
                     rng: &mut ChaCha8Rng,
                     name: &str,
                     fan_in: usize,
                     fan_out: usize|
     -> DenseLayer {
        let w_idx = params.push(format!("{name}.w"), init_weight(rng, &[fan_in, fan_out], fan_in));
        let b_idx = params.push(format!("{name}.b"), Tensor::zeros(&[fan_out]));
        DenseLayer { name: name.to_string(), fan_in, fan_out, w: w_idx, b: b_idx }
    };

    let hidden_pre = pre_width(config.activation, config.width_policy, config.hidden, "hidden width")?;
    let hidden_post = post_width(config.activation, hidden_pre);
    let head = if config.dueling {
        let vh = dense(&mut params, &mut rng, "value_hidden", flat_len, hidden_pre);
        let vo = dense(&mut params, &mut rng, "value_out", hidden_post, 1);
        let ah = dense(&mut params, &mut rng, "adv_hidden", flat_len, hidden_pre);
        let ao = dense(&mut params, &mut rng, "adv_out", hidden_post, actions);
        Head::Dueling { value: [vh, vo], adv: [ah, ao] }
    } else {
        let hid = dense(&mut params, &mut rng, "hidden", flat_len, hidden_pre);
        let out = dense(&mut params, &mut rng, "out", hidden_post, actions);
        Head::Single { hidden: hid, out }
    };

    let net = QNetwork {
        input_shape,
        actions,
        activation: config.activation,
        conv: conv_layers,
        head,
        flat_len,
    };
    Ok((net, params))
}

/// Trace of one taped forward pass: the Q output, the tape ids of every
/// parameter (in store order), and each probed site's pre/post activations.
pub struct ForwardPass {
    pub q: BufId,
    pub param_ids: Vec<BufId>,
    pub sites: Vec<(String, BufId, BufId)>,
}

/// Plain forward output with the probed activations materialized.
pub struct ForwardValues {
    pub q: Tensor,
    pub sites: Vec<(String, Tensor, Tensor)>,
}

impl QNetwork {
    pub fn flat_len(&self) -> usize {
        self.flat_len
    }

    fn dense_layers(&self) -> Vec<&DenseLayer> {
        match &self.head {
            Head::Dueling { value, adv } => {
                vec![&value[0], &value[1], &adv[0], &adv[1]]
            }
            Head::Single { hidden, out } => vec![hidden, out],
        }
    }

    /// Parameter layers in forward order (weight counts exclude biases).
    pub fn layer_infos(&self) -> Vec<LayerInfo> {
        let mut out: Vec<LayerInfo> = self
            .conv
            .iter()
            .map(|c| LayerInfo {
                name: c.name.clone(),
                weight_count: c.cout * c.cin * c.kernel * c.kernel,
            })
            .collect();
        out.extend(self.dense_layers().into_iter().map(|d| LayerInfo {
            name: d.name.clone(),
            weight_count: d.fan_in * d.fan_out,
        }));
        out
    }

    /// Probed activation sites: the convolution trunk output plus each
    /// stream's hidden layer.
    pub fn site_infos(&self) -> Vec<SiteInfo> {
        let mut out = Vec::new();
        if let Some(last) = self.conv.last() {
            out.push(SiteInfo { name: "trunk".into(), units: self.flat_len });
            let _ = last;
        }
        match &self.head {
            Head::Dueling { value, adv } => {
                out.push(SiteInfo {
                    name: "value_hidden".into(),
                    units: post_width(self.activation, value[0].fan_out),
                });
                out.push(SiteInfo {
                    name: "adv_hidden".into(),
                    units: post_width(self.activation, adv[0].fan_out),
                });
            }
            Head::Single { hidden, .. } => {
                out.push(SiteInfo {
                    name: "hidden".into(),
                    units: post_width(self.activation, hidden.fan_out),
                });
            }
        }
        out
    }

    /// Names of the sites that feed the Q heads directly (the hidden-layer
    /// sites, excluding the trunk).
    pub fn hidden_site_names(&self) -> Vec<String> {
        match &self.head {
            Head::Dueling { .. } => vec!["value_hidden".into(), "adv_hidden".into()],
            Head::Single { .. } => vec!["hidden".into()],
        }
    }

    fn check_input(&self, obs: &Tensor) -> Result<usize> {
        let (c, h, w) = self.input_shape;
        if obs.shape.len() != 4 || obs.shape[1] != c || obs.shape[2] != h || obs.shape[3] != w {
            return Err(Error::shape(
                "network input",
                format!("[B, {c}, {h}, {w}]"),
                format!("{:?}", obs.shape),
            ));
        }
        Ok(obs.shape[0])
    }

    fn activate_traced(&self, tape: &mut Tape, pre: BufId, feature_axis: usize) -> Result<BufId> {
        Ok(match self.activation {
            Activation::Relu => tape.relu(pre),
            Activation::Crelu => tape.crelu(pre, feature_axis)?,
        })
    }

    /// Forward pass recorded on a tape. Parameters are registered as
    /// differentiable leaves in store order.
    pub fn forward_traced(
        &self,
        params: &ParamStore,
        obs: &Tensor,
        tape: &mut Tape,
    ) -> Result<ForwardPass> {
        let batch = self.check_input(obs)?;
        let param_ids: Vec<BufId> = (0..params.len())
            .map(|i| tape.param(params.value(i).clone()))
            .collect();
        let mut sites = Vec::new();

        let mut x = tape.leaf(obs.clone());
        for (li, layer) in self.conv.iter().enumerate() {
            let pre = tape
                .conv2d(x, param_ids[layer.w], param_ids[layer.b], layer.stride)
                .map_err(|e| Error::config(format!("conv layer {li} ({}): {e}", layer.name)))?;
            let post = self.activate_traced(tape, pre, 1)?;
            if li + 1 == self.conv.len() {
                sites.push(("trunk".to_string(), pre, post));
            }
            x = post;
        }
        let flat = tape.reshape(x, vec![batch, self.flat_len])?;

        let stream = |tape: &mut Tape, layers: &[DenseLayer; 2], site: &str| -> Result<(BufId, (String, BufId, BufId))> {
            let z = tape.matmul(flat, param_ids[layers[0].w])?;
            let zb = tape.bias_add(z, param_ids[layers[0].b])?;
            let h = self.activate_traced(tape, zb, 1)?;
            let site_rec = (site.to_string(), zb, h);
            let o = tape.matmul(h, param_ids[layers[1].w])?;
            let ob = tape.bias_add(o, param_ids[layers[1].b])?;
            Ok((ob, site_rec))
        };

        let q = match &self.head {
            Head::Dueling { value, adv } => {
                let (v, vsite) = stream(tape, value, "value_hidden")?;
                let (a, asite) = stream(tape, adv, "adv_hidden")?;
                sites.push(vsite);
                sites.push(asite);
                tape.dueling_combine(v, a)?
            }
            Head::Single { hidden, out } => {
                let layers = [hidden.clone(), out.clone()];
                let (q, site) = stream(tape, &layers, "hidden")?;
                sites.push(site);
                q
            }
        };
        Ok(ForwardPass { q, param_ids, sites })
    }

    /// Forward pass with no tape; same kernels, bit-identical output.
    pub fn forward_values(&self, params: &ParamStore, obs: &Tensor) -> Result<ForwardValues> {
        let batch = self.check_input(obs)?;
        let mut sites = Vec::new();

        let mut x = obs.clone();
        for layer in &self.conv {
            let geom = ConvGeom {
                batch,
                cin: layer.cin,
                h: x.shape[2],
                w: x.shape[3],
                cout: layer.cout,
                k: layer.kernel,
                stride: layer.stride,
                ho: layer.out_h,
                wo: layer.out_w,
            };
            let mut out = vec![0.0; batch * layer.cout * layer.out_h * layer.out_w];
            let sparse = conv_use_sparse(&x.data);
            conv2d_forward(
                &x.data,
                &params.value(layer.w).data,
                &params.value(layer.b).data,
                &mut out,
                &geom,
                sparse,
            );
            let pre = Tensor {
                shape: vec![batch, layer.cout, layer.out_h, layer.out_w],
                data: out,
            };
            let post = self.activate_plain(&pre)?;
            let is_last = std::ptr::eq(layer, self.conv.last().unwrap());
            if is_last {
                sites.push(("trunk".to_string(), pre.clone(), post.clone()));
            }
            x = post;
        }
        let flat = Tensor {
            shape: vec![batch, self.flat_len],
            data: x.data,
        };

        let dense = |layer: &DenseLayer, input: &Tensor| -> Tensor {
            let mut out = vec![0.0; batch * layer.fan_out];
            matmul_kernel(
                &input.data,
                &params.value(layer.w).data,
                &mut out,
                batch,
                layer.fan_in,
                layer.fan_out,
            );
            let bias = &params.value(layer.b).data;
            for r in 0..batch {
                let row = &mut out[r * layer.fan_out..(r + 1) * layer.fan_out];
                for (o, b) in row.iter_mut().zip(bias.iter()) {
                    *o += b;
                }
            }
            Tensor { shape: vec![batch, layer.fan_out], data: out }
        };

        let stream = |layers: &[DenseLayer; 2], site: &str, sites: &mut Vec<(String, Tensor, Tensor)>| -> Result<Tensor> {
            let pre = dense(&layers[0], &flat);
            let post = self.activate_plain(&pre)?;
            sites.push((site.to_string(), pre, post.clone()));
            Ok(dense(&layers[1], &post))
        };

        let q = match &self.head {
            Head::Dueling { value, adv } => {
                let v = stream(value, "value_hidden", &mut sites)?;
                let a = stream(adv, "adv_hidden", &mut sites)?;
                let mut q = vec![0.0; batch * self.actions];
                for b in 0..batch {
                    let row = &a.data[b * self.actions..(b + 1) * self.actions];
                    let mean = row.iter().sum::<f64>() / self.actions as f64;
                    let dst = &mut q[b * self.actions..(b + 1) * self.actions];
                    for j in 0..self.actions {
                        dst[j] = v.data[b] + row[j] - mean;
                    }
                }
                Tensor { shape: vec![batch, self.actions], data: q }
            }
            Head::Single { hidden, out } => {
                let layers = [hidden.clone(), out.clone()];
                stream(&layers, "hidden", &mut sites)?
            }
        };
        Ok(ForwardValues { q, sites })
    }

    fn activate_plain(&self, pre: &Tensor) -> Result<Tensor> {
        Ok(match self.activation {
            Activation::Relu => relu(pre),
            Activation::Crelu => crelu(pre, 1)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::config::QNetworkConfig;

    fn cfg(activation: Activation, policy: WidthPolicy) -> QNetworkConfig {
        QNetworkConfig {
            activation,
            width_policy: policy,
            dueling: true,
            conv: vec![
                ConvSpec { channels: 4, kernel: 3, stride: 1 },
                ConvSpec { channels: 8, kernel: 3, stride: 2 },
            ],
            hidden: 512,
        }
    }

    fn weight_counts(config: &QNetworkConfig) -> Vec<(String, usize)> {
        let (net, _) = build_network(config, (4, 10, 10), 3, 7).unwrap();
        net.layer_infos().into_iter().map(|l| (l.name, l.weight_count)).collect()
    }

    #[test]
    fn invariant_input_doubles_all_but_first_layer() {
        // A 512-unit ReLU hidden maps to CReLU pre-activation 512 and
        // post-activation 1024, so the next layer's fan-in doubles.
        let base = weight_counts(&cfg(Activation::Relu, WidthPolicy::InvariantInput));
        let big = weight_counts(&cfg(Activation::Crelu, WidthPolicy::InvariantInput));
        assert_eq!(base[0].1, big[0].1, "first layer unchanged");
        for i in 1..base.len() {
            assert_eq!(2 * base[i].1, big[i].1, "layer {} ({})", i, base[i].0);
        }
        let (net, _) = build_network(&cfg(Activation::Crelu, WidthPolicy::InvariantInput), (4, 10, 10), 3, 7).unwrap();
        let sites = net.site_infos();
        assert_eq!(sites[1], SiteInfo { name: "value_hidden".into(), units: 1024 });
    }

    #[test]
    fn invariant_output_halves_all_but_last_layers() {
        let base = weight_counts(&cfg(Activation::Relu, WidthPolicy::InvariantOutput));
        let small = weight_counts(&cfg(Activation::Crelu, WidthPolicy::InvariantOutput));
        // Layers: conv1 conv2 value_hidden value_out adv_hidden adv_out.
        for (i, halved) in [(0, true), (1, true), (2, true), (3, false), (4, true), (5, false)] {
            if halved {
                assert_eq!(base[i].1, 2 * small[i].1, "layer {} ({})", i, base[i].0);
            } else {
                assert_eq!(base[i].1, small[i].1, "layer {} ({})", i, base[i].0);
            }
        }
        // Post-activation hidden width 512 comes from pre-activation 256.
        let (net, _) = build_network(&cfg(Activation::Crelu, WidthPolicy::InvariantOutput), (4, 10, 10), 3, 7).unwrap();
        let sites = net.site_infos();
        assert_eq!(sites[1].units, 512);
    }

    #[test]
    fn odd_width_under_invariant_output_is_a_config_error() {
        let mut c = cfg(Activation::Crelu, WidthPolicy::InvariantOutput);
        c.hidden = 511;
        assert!(build_network(&c, (4, 10, 10), 3, 7).is_err());
    }

    #[test]
    fn same_seed_bit_identical_weights() {
        let c = cfg(Activation::Crelu, WidthPolicy::InvariantInput);
        let (_, p1) = build_network(&c, (4, 10, 10), 3, 42).unwrap();
        let (_, p2) = build_network(&c, (4, 10, 10), 3, 42).unwrap();
        assert_eq!(p1.content_hash(), p2.content_hash());
        let (_, p3) = build_network(&c, (4, 10, 10), 3, 43).unwrap();
        assert_ne!(p1.content_hash(), p3.content_hash());
    }

    #[test]
    fn traced_and_plain_forward_agree_bitwise() {
        for activation in [Activation::Relu, Activation::Crelu] {
            let c = QNetworkConfig {
                activation,
                hidden: 16,
                conv: vec![ConvSpec { channels: 3, kernel: 3, stride: 1 }],
                ..Default::default()
            };
            let (net, params) = build_network(&c, (2, 6, 6), 4, 9).unwrap();
            let mut obs = Tensor::zeros(&[2, 2, 6, 6]);
            obs.data[3] = 1.0;
            obs.data[40] = 1.0;
            obs.data[100] = 1.0;
            let mut tape = Tape::new();
            let pass = net.forward_traced(&params, &obs, &mut tape).unwrap();
            let vals = net.forward_values(&params, &obs).unwrap();
            assert_eq!(tape.value(pass.q).data, vals.q.data);
            for ((n1, pre_id, post_id), (n2, pre, post)) in pass.sites.iter().zip(vals.sites.iter()) {
                assert_eq!(n1, n2);
                assert_eq!(&tape.value(*pre_id).data, &pre.data);
                assert_eq!(&tape.value(*post_id).data, &post.data);
            }
        }
    }

    #[test]
    fn default_conv_stack_sees_every_grid_cell() {
        // Receptive-field audit of the default architecture on the default
        // 10x10 observation: each layer's windows must tile its input with
        // no skipped rows or columns.
        let cfg = QNetworkConfig::default();
        let mut n = 10usize;
        for spec in &cfg.conv {
            assert!(spec.kernel >= spec.stride, "stride gaps skip cells");
            let last_start = ((n - spec.kernel) / spec.stride) * spec.stride;
            assert!(
                last_start + spec.kernel >= n,
                "kernel {} stride {} leaves the tail of a {}-wide input unseen",
                spec.kernel,
                spec.stride,
                n
            );
            n = (n - spec.kernel) / spec.stride + 1;
        }
    }

    #[test]
    fn kernel_too_large_for_input_rejected() {
        let c = QNetworkConfig {
            conv: vec![ConvSpec { channels: 4, kernel: 11, stride: 1 }],
            ..Default::default()
        };
        let err = build_network(&c, (2, 10, 10), 3, 1).unwrap_err();
        assert!(err.to_string().contains("conv layer 0"), "{err}");
    }
}
