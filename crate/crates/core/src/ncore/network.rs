use rand::Rng;

use super::{ModelError, NcoreConfig};
use crate::diffcore::{affine_kernel, DiffError, NodeId, ParamId, ParamStore, Tape};
use crate::seeding;
use crate::simcore::{TreatmentSet, MAX_TREATMENTS};

#[derive(Clone, Copy, Debug, PartialEq)]
struct Layer {
    weight: ParamId,
    bias: ParamId,
}

/// Output of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub y: f64,
    /// Final hidden representation `h_T` fed to the head.
    pub hidden: Vec<f64>,
}

/// Parameters and layout of the branched network.
#[derive(Clone, Debug)]
pub struct Network {
    config: NcoreConfig,
    params: ParamStore,
    base: Vec<Layer>,
    arms: Vec<Vec<Layer>>,
    head: Layer,
}

impl Network {
    /// Seeded construction: base layers, then one arm per treatment, then the head.
    pub fn build(config: &NcoreConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = seeding::stream(config.seed, "ncore-init", &[]);
        let mut params = ParamStore::new();
        let n = config.hidden;
        let mut layer = |params: &mut ParamStore, name: String, fan_in: usize, fan_out: usize| -> Result<Layer, DiffError> {
            let weight = params.add_weight(format!("{name}.weight"), fan_in, fan_out, &mut rng)?;
            let bias = params.add_zeros(format!("{name}.bias"), fan_out)?;
            Ok(Layer { weight, bias })
        };
        let mut base = Vec::with_capacity(config.base_layers);
        for l in 0..config.base_layers {
            let fan_in = if l == 0 { config.p } else { n };
            base.push(layer(&mut params, format!("base.{l}"), fan_in, n)?);
        }
        let mut arms = Vec::with_capacity(config.k);
        for j in 0..config.k {
            let sub = (0..config.arm_depth)
                .map(|s| layer(&mut params, format!("arm.{j}.{s}"), n, n))
                .collect::<Result<Vec<_>, _>>()?;
            arms.push(sub);
        }
        let head = layer(&mut params, "head".into(), n, 1)?;
        Ok(Self { config: config.clone(), params, base, arms, head })
    }

    /// Rebuilds the layout for `config` around an existing parameter store.
    pub fn from_params(config: &NcoreConfig, params: ParamStore) -> Result<Self, ModelError> {
        let mut net = Self::build(config)?;
        if params.len() != net.params.len() {
            return Err(ModelError::Config(format!("{} params supplied, layout needs {}", params.len(), net.params.len())));
        }
        for (a, b) in params.iter().zip(net.params.iter()) {
            if a.name != b.name || a.shape != b.shape {
                return Err(ModelError::Config(format!("param {:?} {:?} does not fit {:?} {:?}", a.name, a.shape, b.name, b.shape)));
            }
        }
        net.params = params;
        Ok(net)
    }

    pub fn config(&self) -> &NcoreConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    /// Parameter ids of the base layers.
    pub fn base_param_ids(&self) -> Vec<ParamId> {
        self.base.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }

    /// Parameter ids of treatment `j`'s arm.
    pub fn arm_param_ids(&self, j: usize) -> Vec<ParamId> {
        self.arms[j].iter().flat_map(|l| [l.weight, l.bias]).collect()
    }

    pub fn head_param_ids(&self) -> Vec<ParamId> {
        vec![self.head.weight, self.head.bias]
    }

    fn check_inputs(&self, x: &[f64], t: TreatmentSet) -> Result<(), ModelError> {
        if x.len() != self.config.p {
            return Err(ModelError::Dimension { expected: self.config.p, got: x.len() });
        }
        if t.is_empty() {
            return Err(ModelError::EmptyTreatmentSet);
        }
        if t.k() != self.config.k {
            return Err(ModelError::TreatmentCount { expected: self.config.k, got: t.k() });
        }
        Ok(())
    }

    fn apply(&self, layer: Layer, input: &[f64], out: &mut Vec<f64>) {
        let b = self.params.value(layer.bias);
        out.resize(b.len(), 0.0);
        affine_kernel(self.params.value(layer.weight), b, input, out);
    }

    fn activate(&self, values: &mut [f64]) {
        let kind = self.config.activation;
        values.iter_mut().for_each(|v| *v = kind.apply(*v));
    }

    /// Shared representation `h_{}` at inference.
    fn base_forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let mut next = Vec::with_capacity(self.config.hidden);
        for &layer in &self.base {
            self.apply(layer, &h, &mut next);
            self.activate(&mut next);
            std::mem::swap(&mut h, &mut next);
        }
        h
    }

    /// `out = arm_j(input)`; `tmp` is scratch for deep arms.
    fn arm_forward(&self, j: usize, input: &[f64], out: &mut Vec<f64>, tmp: &mut Vec<f64>) {
        let arm = &self.arms[j];
        tmp.clear();
        tmp.extend_from_slice(input);
        for &layer in arm {
            self.apply(layer, tmp, out);
            if self.config.arm_activation {
                self.activate(out);
            }
            std::mem::swap(tmp, out);
        }
        std::mem::swap(tmp, out);
    }

    fn head_forward(&self, h: &[f64]) -> f64 {
        let mut y = [0.0];
        affine_kernel(self.params.value(self.head.weight), self.params.value(self.head.bias), h, &mut y);
        y[0]
    }

    /// Inference forward pass (dropout disabled).
    pub fn forward(&self, x: &[f64], t: TreatmentSet) -> Result<Prediction, ModelError> {
        self.check_inputs(x, t)?;
        let mut h = self.base_forward(x);
        let (mut out, mut tmp) = (Vec::new(), Vec::new());
        for j in t.iter() {
            self.arm_forward(j, &h, &mut out, &mut tmp);
            std::mem::swap(&mut h, &mut out);
        }
        Ok(Prediction { y: self.head_forward(&h), hidden: h })
    }

    /// Forward pass with dropout active in the base layers.
    pub fn forward_training<R: Rng + ?Sized>(&self, x: &[f64], t: TreatmentSet, rng: &mut R) -> Result<Prediction, ModelError> {
        let mut tape = Tape::new();
        let (hidden, out) = self.record_nodes(&mut tape, x, t, true, rng)?;
        Ok(Prediction { y: tape.value(out)[0], hidden: tape.value(hidden).to_vec() })
    }

    /// Records the forward pass on `tape` and returns the scalar output node.
    pub fn record<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        x: &[f64],
        t: TreatmentSet,
        training: bool,
        rng: &mut R,
    ) -> Result<NodeId, ModelError> {
        Ok(self.record_nodes(tape, x, t, training, rng)?.1)
    }

    fn record_nodes<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        x: &[f64],
        t: TreatmentSet,
        training: bool,
        rng: &mut R,
    ) -> Result<(NodeId, NodeId), ModelError> {
        self.check_inputs(x, t)?;
        let mut h = tape.input(x);
        for &layer in &self.base {
            h = tape.affine(&self.params, layer.weight, layer.bias, h)?;
            h = tape.activation(self.config.activation, h)?;
            h = tape.dropout(h, self.config.dropout, training, rng)?;
        }
        for j in t.iter() {
            for &layer in &self.arms[j] {
                h = tape.affine(&self.params, layer.weight, layer.bias, h)?;
                if self.config.arm_activation {
                    h = tape.activation(self.config.activation, h)?;
                }
            }
        }
        let out = tape.affine(&self.params, self.head.weight, self.head.bias, h)?;
        Ok((h, out))
    }

    /// Predictions for all `2^k - 1` non-empty treatment sets, entry `m - 1`
    /// for mask `m`. Prefixes shared between sets are computed once; every
    /// entry equals [`Network::forward`] for its mask bit for bit.
    pub fn predict_all_combinations(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let k = self.config.k;
        if k > MAX_TREATMENTS {
            return Err(ModelError::EnumerationBound(k));
        }
        if x.len() != self.config.p {
            return Err(ModelError::Dimension { expected: self.config.p, got: x.len() });
        }
        let mut out = vec![0.0; (1usize << k) - 1];
        let mut levels: Vec<Vec<f64>> = vec![Vec::with_capacity(self.config.hidden); k + 1];
        levels[0] = self.base_forward(x);
        let mut tmp = Vec::with_capacity(self.config.hidden);
        self.descend(0, 0, 0, &mut levels, &mut tmp, &mut out);
        Ok(out)
    }

    fn descend(&self, depth: usize, mask: u32, first: usize, levels: &mut [Vec<f64>], tmp: &mut Vec<f64>, out: &mut [f64]) {
        for j in first..self.config.k {
            let (done, rest) = levels.split_at_mut(depth + 1);
            self.arm_forward(j, &done[depth], &mut rest[0], tmp);
            let m = mask | (1 << j);
            out[m as usize - 1] = self.head_forward(&rest[0]);
            self.descend(depth + 1, m, j + 1, levels, tmp, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Activation;

    fn toy() -> Network {
        let mut cfg = NcoreConfig::new(2, 1);
        cfg.hidden = 1;
        cfg.base_layers = 1;
        cfg.activation = Activation::Linear;
        let mut net = Network::build(&cfg).unwrap();
        let set = |net: &mut Network, name: &str, v: f64| {
            let id = net.params().id(name).unwrap();
            net.params_mut().value_mut(id)[0] = v;
        };
        for (name, v) in [
            ("base.0.weight", 1.0),
            ("base.0.bias", 0.0),
            ("arm.0.0.weight", 2.0),
            ("arm.0.0.bias", 1.0),
            ("arm.1.0.weight", 3.0),
            ("arm.1.0.bias", 0.0),
            ("head.weight", 1.0),
            ("head.bias", 0.0),
        ] {
            set(&mut net, name, v);
        }
        net
    }

    fn set(mask: u32, k: usize) -> TreatmentSet {
        TreatmentSet::non_empty(mask, k).unwrap()
    }

    #[test]
    fn scalar_toy_composition() {
        let net = toy();
        assert_eq!(net.forward(&[1.0], set(0b01, 2)).unwrap().y, 3.0);
        assert_eq!(net.forward(&[1.0], set(0b11, 2)).unwrap().y, 9.0);
        assert_eq!(net.predict_all_combinations(&[1.0]).unwrap(), vec![3.0, 3.0, 9.0]);
    }

    #[test]
    fn parameter_count_worked_example() {
        let mut cfg = NcoreConfig::new(2, 4);
        cfg.hidden = 8;
        cfg.base_layers = 1;
        let net = Network::build(&cfg).unwrap();
        assert_eq!(cfg.parameter_count(), 193);
        assert_eq!(net.params().num_scalars(), 193);
        assert_eq!(net.num_arms(), 2);
        for (l, n, d, k) in [(3, 16, 2, 5), (2, 8, 1, 1)] {
            let mut c = NcoreConfig::new(k, 7);
            c.base_layers = l;
            c.hidden = n;
            c.arm_depth = d;
            assert_eq!(Network::build(&c).unwrap().params().num_scalars(), c.parameter_count());
        }
    }

    #[test]
    fn same_seed_same_initialisation() {
        let cfg = NcoreConfig::new(3, 5);
        assert_eq!(Network::build(&cfg).unwrap().params().flatten(), Network::build(&cfg).unwrap().params().flatten());
        let mut other = cfg.clone();
        other.seed = 1;
        assert_ne!(Network::build(&cfg).unwrap().params().flatten(), Network::build(&other).unwrap().params().flatten());
    }

    #[test]
    fn contract_errors() {
        let net = toy();
        assert!(matches!(net.forward(&[1.0], TreatmentSet::new(0, 2).unwrap()), Err(ModelError::EmptyTreatmentSet)));
        assert!(matches!(net.forward(&[1.0, 2.0], set(1, 2)), Err(ModelError::Dimension { .. })));
        assert!(matches!(net.forward(&[1.0], set(1, 3)), Err(ModelError::TreatmentCount { .. })));
        assert!(Network::build(&NcoreConfig::new(0, 3)).is_err());
    }

    #[test]
    fn arms_are_treatment_specific() {
        let net = Network::build(&NcoreConfig::new(2, 3)).unwrap();
        let x = [0.3, -0.2, 0.9];
        assert_ne!(net.forward(&x, set(0b01, 2)).unwrap().y, net.forward(&x, set(0b10, 2)).unwrap().y);
    }

    /// Independent evaluator: explicit matrix-vector products in row-major
    /// order over the stored weights, arms applied in ascending index order.
    fn brute_force(net: &Network, x: &[f64], mask: u32) -> (f64, Vec<f64>) {
        let p = net.params();
        let layer = |name: &str, h: &[f64], act: bool| -> Vec<f64> {
            let w = p.get(p.id(&format!("{name}.weight")).unwrap());
            let b = p.value(p.id(&format!("{name}.bias")).unwrap());
            let (fan_in, fan_out) = (w.shape[0], w.shape[1]);
            (0..fan_out)
                .map(|i| {
                    let mut s = b[i];
                    #[allow(clippy::needless_range_loop)]
                    for j in 0..fan_in {
                        s += w.value[j * fan_out + i] * h[j];
                    }
                    if act { net.config.activation.apply(s) } else { s }
                })
                .collect()
        };
        let mut h = x.to_vec();
        for l in 0..net.config.base_layers {
            h = layer(&format!("base.{l}"), &h, true);
        }
        for j in 0..net.k() {
            if mask & (1 << j) != 0 {
                for s in 0..net.config.arm_depth {
                    h = layer(&format!("arm.{j}.{s}"), &h, net.config.arm_activation);
                    assert_eq!(h.len(), net.config.hidden);
                }
            }
        }
        (layer("head", &h, false)[0], h)
    }

    #[test]
    fn recursion_matches_brute_force_for_every_mask() {
        let mut rng = seeding::stream(11, "net-test", &[]);
        for (seed, (k, depth, arm_act)) in [(4, 1, false), (3, 2, true), (5, 1, true)].into_iter().enumerate() {
            let mut cfg = NcoreConfig::new(k, 6);
            cfg.hidden = 8;
            cfg.base_layers = 2;
            cfg.arm_depth = depth;
            cfg.arm_activation = arm_act;
            cfg.seed = seed as u64;
            let mut net = Network::build(&cfg).unwrap();
            // Non-zero biases so every term is exercised.
            for id in net.params().ids().collect::<Vec<_>>() {
                for v in net.params_mut().value_mut(id) {
                    *v += rng.random_range(-0.1..0.1);
                }
            }
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let all = net.predict_all_combinations(&x).unwrap();
            assert_eq!(all.len(), (1 << k) - 1);
            for m in 1..(1u32 << k) {
                let (y, h) = brute_force(&net, &x, m);
                let fwd = net.forward(&x, set(m, k)).unwrap();
                assert_eq!(all[m as usize - 1], fwd.y, "mask {m}");
                assert_eq!(fwd.y, y, "mask {m}");
                assert_eq!(fwd.hidden, h);
            }
        }
    }

    #[test]
    fn enumeration_bound() {
        let mut cfg = NcoreConfig::new(20, 1);
        cfg.hidden = 8;
        cfg.k = 21;
        assert!(cfg.validate().is_err());
        let net = Network::build(&NcoreConfig::new(2, 2)).unwrap();
        assert!(matches!(net.predict_all_combinations(&[0.0]), Err(ModelError::Dimension { .. })));
    }

    fn loss_grads(net: &mut Network, x: &[f64], t: TreatmentSet, target: f64) -> f64 {
        let mut tape = Tape::new();
        let mut rng = seeding::stream(0, "unused", &[]);
        let out = net.record(&mut tape, x, t, false, &mut rng).unwrap();
        let loss = tape.squared_error(out, &[target]).unwrap();
        let value = tape.value(loss)[0];
        net.params_mut().zero_grad();
        tape.backward(loss, net.params_mut()).unwrap();
        value
    }

    #[test]
    fn gradient_masking_and_trunk_participation() {
        let cfg = NcoreConfig::new(4, 3);
        let mut net = Network::build(&cfg).unwrap();
        let x = [0.5, -1.0, 2.0];
        for m in 1..16u32 {
            loss_grads(&mut net, &x, set(m, 4), 5.0);
            for j in 0..4 {
                for id in net.arm_param_ids(j) {
                    let p = net.params().get(id);
                    if m & (1 << j) == 0 {
                        assert!(!p.touched);
                        assert!(p.grad.iter().all(|&g| g == 0.0));
                    } else {
                        assert!(p.touched);
                    }
                }
            }
            for id in net.base_param_ids() {
                assert!(net.params().get(id).touched);
            }
            let base_w = net.base_param_ids()[0];
            assert!(net.params().grad(base_w).iter().any(|&g| g != 0.0));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut cfg = NcoreConfig::new(3, 2);
        cfg.hidden = 4;
        cfg.activation = Activation::Linear;
        cfg.arm_depth = 2;
        cfg.arm_activation = true;
        let mut net = Network::build(&cfg).unwrap();
        let x = [0.7, -0.4];
        let t = set(0b101, 3);
        loss_grads(&mut net, &x, t, 1.5);
        let analytic = net.params().flatten_grads();
        let theta = net.params().flatten();
        let h = 1e-6;
        for i in 0..theta.len() {
            let mut plus = theta.clone();
            plus[i] += h;
            net.params_mut().assign_flat(&plus).unwrap();
            let lp = loss_grads(&mut net, &x, t, 1.5);
            plus[i] -= 2.0 * h;
            net.params_mut().assign_flat(&plus).unwrap();
            let lm = loss_grads(&mut net, &x, t, 1.5);
            let numeric = (lp - lm) / (2.0 * h);
            assert!((numeric - analytic[i]).abs() < 1e-5 * (1.0 + numeric.abs()), "param {i}: {numeric} vs {}", analytic[i]);
        }
    }

    #[test]
    fn training_forward_without_dropout_equals_inference() {
        let net = Network::build(&NcoreConfig::new(3, 4)).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4];
        let mut rng = seeding::stream(3, "d", &[]);
        let a = net.forward(&x, set(0b110, 3)).unwrap();
        let b = net.forward_training(&x, set(0b110, 3), &mut rng).unwrap();
        assert_eq!(a, b);
    }
}
