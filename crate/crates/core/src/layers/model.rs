use rand::Rng;

use super::{ConvCertificate, EquivariantLayer, NeqKind, NonEquivariantLayer};
use crate::error::{AceError, Result};
use crate::groups::{Group, Representation, Space};
use crate::tensor::Tensor;

/// `f(z) = f_eq(z) + γ·f_neq(z)`.
#[derive(Debug)]
pub struct HomotopicLayer {
    pub eq: EquivariantLayer,
    pub neq: NonEquivariantLayer,
    pub gamma: Tensor,
}

/// Per-layer constants consumed by the approximation bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerConstants {
    /// Lipschitz bound of the equivariant part.
    pub m_eq: f64,
    /// Lipschitz bound of the unconstrained branch.
    pub m_neq: f64,
    /// Operator bound `‖f_neq(x)‖ ≤ B‖x‖`.
    pub b: f64,
}

impl HomotopicLayer {
    pub fn new(eq: EquivariantLayer, neq: NonEquivariantLayer, gamma: f64) -> Result<Self> {
        if eq.input_space() != neq.input_space() || eq.output_space() != neq.output_space() {
            return Err(AceError::SpaceMismatch {
                expected: format!("{} -> {}", eq.input_space(), eq.output_space()),
                got: format!("{} -> {}", neq.input_space(), neq.output_space()),
            });
        }
        Ok(Self { eq, neq, gamma: Tensor::scalar_param(gamma) })
    }

    pub fn gamma_value(&self) -> f64 {
        self.gamma.item()
    }

    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        let eq = self.eq.forward(z)?;
        let neq = self.neq.forward(z)?;
        eq.add(&self.gamma.mul(&neq)?)
    }

    pub fn constants(&self, cert: ConvCertificate) -> Result<LayerConstants> {
        let b = self.neq.operator_bound()?;
        Ok(LayerConstants { m_eq: self.eq.lipschitz_bound(cert)?, m_neq: b, b })
    }
}

/// Fixed map applied after the last layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Identity,
    /// Mean over the group axis of a regular map, `4×C×H×W → C×H×W`. Linear,
    /// equivariant (regular → image) and with operator norm `1/2 ≤ 1`.
    GroupPool,
}

impl Head {
    pub fn output_space(self, input: Space) -> Result<Space> {
        match (self, input) {
            (Head::Identity, s) => Ok(s),
            (Head::GroupPool, Space::Regular { channels, height, width }) => Ok(Space::Image { channels, height, width }),
            (Head::GroupPool, s) => Err(AceError::SpaceMismatch { expected: "regular map".into(), got: s.to_string() }),
        }
    }

    pub fn apply(self, z: &Tensor) -> Result<Tensor> {
        match self {
            Head::Identity => Ok(z.clone()),
            Head::GroupPool => z.mean_axes(&[0]),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Head::Identity => "identity",
            Head::GroupPool => "group_pool",
        }
    }
}

/// Which parameters an optimiser should see.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Equivariant,
    NonEquivariant,
    Gamma,
}

/// `f = head ∘ f^L ∘ relu ∘ … ∘ relu ∘ f^1`.
#[derive(Debug)]
pub struct HomotopicModel {
    layers: Vec<HomotopicLayer>,
    head: Head,
    group: Group,
}

impl HomotopicModel {
    pub fn new(layers: Vec<HomotopicLayer>, head: Head) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| AceError::InvalidArgument("a model needs at least one layer".into()))?;
        let group = first.eq.group();
        for pair in layers.windows(2) {
            if pair[0].eq.output_space() != pair[1].eq.input_space() {
                return Err(AceError::SpaceMismatch {
                    expected: pair[1].eq.input_space().to_string(),
                    got: pair[0].eq.output_space().to_string(),
                });
            }
        }
        if layers.iter().any(|l| l.eq.group() != group) {
            return Err(AceError::InvalidArgument("all layers must share one symmetry group".into()));
        }
        let model = Self { layers, head, group };
        model.output_space()?;
        Representation::new(model.group.clone(), model.input_space())?;
        Representation::new(model.group.clone(), model.output_space()?)?;
        Ok(model)
    }

    /// Two-layer C4 model on `1×side×side` images: lifting conv to `hidden`
    /// channels, group conv back to one channel, group pooling.
    pub fn c4_image_model<R: Rng + ?Sized>(
        side: usize,
        hidden: usize,
        kernel: usize,
        neq: NeqKind,
        gamma_init: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Self::c4_model(side, &[1, hidden, 1], kernel, neq, gamma_init, rng)
    }

    /// C4 model with channel widths `channels[0] → … → channels[L]`: one lifting
    /// conv followed by group convs, then group pooling.
    pub fn c4_model<R: Rng + ?Sized>(
        side: usize,
        channels: &[usize],
        kernel: usize,
        neq: NeqKind,
        gamma_init: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if channels.len() < 2 {
            return Err(AceError::InvalidArgument("a C4 model needs at least two channel widths".into()));
        }
        let eqs = channels
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                if i == 0 {
                    EquivariantLayer::random_c4_lifting(w[0], w[1], kernel, side, rng)
                } else {
                    EquivariantLayer::random_c4_group(w[0], w[1], kernel, side, rng)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let layers = eqs
            .into_iter()
            .map(|eq| {
                let neq = NonEquivariantLayer::random(neq, eq.input_space(), eq.output_space(), rng)?;
                HomotopicLayer::new(eq, neq, gamma_init)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers, Head::GroupPool)
    }

    /// DeepSets model on `n×d` sets with the given hidden widths, ending in `d_out` features.
    pub fn deepsets_model<R: Rng + ?Sized>(
        n: usize,
        widths: &[usize],
        neq: NeqKind,
        gamma_init: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let layers = widths
            .windows(2)
            .map(|w| {
                let eq = EquivariantLayer::random_deepsets(n, w[0], w[1], rng)?;
                let neq = NonEquivariantLayer::random(neq, eq.input_space(), eq.output_space(), rng)?;
                HomotopicLayer::new(eq, neq, gamma_init)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers, Head::Identity)
    }

    pub fn layers(&self) -> &[HomotopicLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [HomotopicLayer] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn input_space(&self) -> Space {
        self.layers[0].eq.input_space()
    }

    pub fn output_space(&self) -> Result<Space> {
        self.head.output_space(self.layers.last().expect("non-empty").eq.output_space())
    }

    pub fn input_representation(&self) -> Representation {
        Representation::new(self.group.clone(), self.input_space()).expect("validated at construction")
    }

    pub fn output_representation(&self) -> Representation {
        let space = self.output_space().expect("validated at construction");
        Representation::new(self.group.clone(), space).expect("validated at construction")
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with_inputs(x)?.0)
    }

    /// Output together with the (post-activation) input of every layer, `z_0 … z_{L−1}`.
    pub fn forward_with_inputs(&self, x: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        self.input_space().check(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut z = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            inputs.push(z.clone());
            z = layer.forward(&z)?;
            if i < last {
                z = z.relu();
            }
        }
        Ok((self.head.apply(&z)?, inputs))
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.layers.iter().map(HomotopicLayer::gamma_value).collect()
    }

    pub fn gamma_tensors(&self) -> Vec<Tensor> {
        self.layers.iter().map(|l| l.gamma.clone()).collect()
    }

    pub fn set_gammas(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.layers.len() {
            return Err(AceError::LengthMismatch { op: "set_gammas", left: self.layers.len(), right: values.len() });
        }
        for (l, v) in self.layers.iter().zip(values) {
            l.gamma.set_data(vec![*v])?;
        }
        Ok(())
    }

    /// Parameters of the selected groups, in a fixed order: layer by layer,
    /// equivariant weights, then branch weights, then γ.
    pub fn parameters(&self, groups: &[ParamGroup]) -> Vec<Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            if groups.contains(&ParamGroup::Equivariant) {
                out.extend(l.eq.weights().iter().cloned());
            }
            if groups.contains(&ParamGroup::NonEquivariant) {
                out.extend(l.neq.weights().iter().cloned());
            }
            if groups.contains(&ParamGroup::Gamma) {
                out.push(l.gamma.clone());
            }
        }
        out
    }

    /// All equivariant and branch weights (θ), excluding γ.
    pub fn theta(&self) -> Vec<Tensor> {
        self.parameters(&[ParamGroup::Equivariant, ParamGroup::NonEquivariant])
    }

    pub fn zero_grad(&self) {
        self.parameters(&[ParamGroup::Equivariant, ParamGroup::NonEquivariant, ParamGroup::Gamma])
            .iter()
            .for_each(Tensor::zero_grad);
    }

    /// Copy with every γ set to 0; the original is untouched.
    pub fn project_equivariant(&self) -> Self {
        let copy = self.deep_copy();
        copy.set_gammas(&vec![0.0; copy.depth()]).expect("same depth");
        copy
    }

    /// Independent copy: no tensor storage is shared with `self`.
    pub fn deep_copy(&self) -> Self {
        self.map_layers(|l| HomotopicLayer { eq: l.eq.deep_copy(), neq: l.neq.deep_copy(), gamma: l.gamma.deep_copy() })
    }

    /// Copy whose parameters record no tape; for evaluation only.
    pub fn frozen(&self) -> Self {
        self.map_layers(|l| HomotopicLayer { eq: l.eq.frozen(), neq: l.neq.frozen(), gamma: l.gamma.detach() })
    }

    fn map_layers(&self, f: impl Fn(&HomotopicLayer) -> HomotopicLayer) -> Self {
        Self { layers: self.layers.iter().map(f).collect(), head: self.head, group: self.group.clone() }
    }

    /// Overwrites every parameter value with those of `other` (same architecture).
    pub fn copy_values_from(&self, other: &HomotopicModel) -> Result<()> {
        let groups = [ParamGroup::Equivariant, ParamGroup::NonEquivariant, ParamGroup::Gamma];
        let (mine, theirs) = (self.parameters(&groups), other.parameters(&groups));
        if mine.len() != theirs.len() {
            return Err(AceError::LengthMismatch { op: "copy_values_from", left: mine.len(), right: theirs.len() });
        }
        for (a, b) in mine.iter().zip(&theirs) {
            if a.shape() != b.shape() {
                return Err(AceError::ShapeMismatch { op: "copy_values_from", left: a.shape().to_vec(), right: b.shape().to_vec() });
            }
            a.set_data(b.to_vec())?;
        }
        Ok(())
    }

    /// Multiplies every branch weight by `factor`. A strict run only damps γ
    /// while the branch's gain on the data exceeds γ², so a larger initial
    /// gain keeps training from hiding the branch before γ has decayed.
    pub fn scale_branches(&self, factor: f64) -> Result<()> {
        if !factor.is_finite() {
            return Err(AceError::InvalidArgument(format!("branch scale must be finite, got {factor}")));
        }
        for w in self.parameters(&[ParamGroup::NonEquivariant]) {
            w.update_data(|d| d.iter_mut().for_each(|v| *v *= factor));
        }
        Ok(())
    }

    pub fn constants(&self, cert: ConvCertificate) -> Result<Vec<LayerConstants>> {
        self.layers.iter().map(|l| l.constants(cert)).collect()
    }

    /// Spectrally normalises every branch; returns the per-matrix σ estimates.
    pub fn spectral_normalize(&mut self, n_iters: usize) -> Result<Vec<f64>> {
        let mut all = Vec::new();
        for l in &mut self.layers {
            all.extend(l.neq.spectral_normalize(n_iters)?);
        }
        Ok(all)
    }

    pub fn all_finite(&self) -> bool {
        self.parameters(&[ParamGroup::Equivariant, ParamGroup::NonEquivariant, ParamGroup::Gamma])
            .iter()
            .all(Tensor::all_finite)
    }
}
