//! Bit-exact binary manifest of a model: head, and per layer the equivariant
//! kind and weights, the branch kind, weights and power vectors, and γ.

use super::{EquivariantKind, EquivariantLayer, Head, HomotopicLayer, HomotopicModel, NeqKind, NonEquivariantLayer};
use crate::codec::{open, seal, Decoder, Encoder, Magic};
use crate::error::{AceError, Result};
use crate::groups::Space;
use crate::tensor::Tensor;

pub const MODEL_MAGIC: Magic = *b"ACEMODEL";
pub const MODEL_VERSION: u32 = 1;

fn encode_tensor(t: &Tensor, enc: &mut Encoder) {
    enc.usizes(t.shape()).f64s(&t.data());
}

fn decode_tensor(dec: &mut Decoder) -> Result<Tensor> {
    let shape = dec.usizes()?;
    Tensor::param(dec.f64s()?, &shape)
}

fn side_of(space: Space) -> usize {
    match space {
        Space::Image { height, .. } | Space::Regular { height, .. } => height,
        Space::Set { n, .. } => n,
        Space::Vector { k } => k,
    }
}

pub fn encode_model(model: &HomotopicModel, enc: &mut Encoder) {
    enc.u8(match model.head() {
        Head::Identity => 0,
        Head::GroupPool => 1,
    });
    enc.usize(model.depth());
    for layer in model.layers() {
        let eq = &layer.eq;
        enc.u8(match eq.kind() {
            EquivariantKind::C4LiftingConv => 0,
            EquivariantKind::C4GroupConv => 1,
            EquivariantKind::DeepSetsLinear => 2,
        });
        enc.usize(side_of(eq.input_space()));
        enc.usize(eq.weights().len());
        eq.weights().iter().for_each(|w| encode_tensor(w, enc));

        let neq = &layer.neq;
        match neq.kind() {
            NeqKind::Dense => enc.u8(0).usize(0),
            NeqKind::Mlp { hidden } => enc.u8(1).usize(hidden),
        };
        enc.usize(neq.weights().len());
        neq.weights().iter().for_each(|w| encode_tensor(w, enc));
        neq.power_vectors().iter().for_each(|v| {
            enc.f64s(v);
        });

        enc.f64(layer.gamma_value());
    }
}

pub fn decode_model(dec: &mut Decoder) -> Result<HomotopicModel> {
    let head = match dec.u8()? {
        0 => Head::Identity,
        1 => Head::GroupPool,
        t => return Err(AceError::Corrupt(format!("unknown head tag {t}"))),
    };
    let depth = dec.usize()?;
    let mut layers = Vec::new();
    for _ in 0..depth {
        let kind = dec.u8()?;
        let side = dec.usize()?;
        let n_eq = dec.usize()?;
        if n_eq > 2 {
            return Err(AceError::Corrupt(format!("{n_eq} equivariant weights")));
        }
        let eq_weights = (0..n_eq).map(|_| decode_tensor(dec)).collect::<Result<Vec<_>>>()?;
        let eq = match (kind, eq_weights.as_slice()) {
            (0, [k]) => EquivariantLayer::c4_lifting_conv(k.clone(), side)?,
            (1, [k]) => EquivariantLayer::c4_group_conv(k.clone(), side)?,
            (2, [a, b]) => EquivariantLayer::deepsets_linear(a.clone(), b.clone(), side)?,
            _ => return Err(AceError::Corrupt(format!("bad equivariant layer tag {kind} with {n_eq} weights"))),
        };

        let neq_kind = match (dec.u8()?, dec.usize()?) {
            (0, _) => NeqKind::Dense,
            (1, hidden) => NeqKind::Mlp { hidden },
            (t, _) => return Err(AceError::Corrupt(format!("unknown branch tag {t}"))),
        };
        let n_neq = dec.usize()?;
        if n_neq > 2 {
            return Err(AceError::Corrupt(format!("{n_neq} branch matrices")));
        }
        let neq_weights = (0..n_neq).map(|_| decode_tensor(dec)).collect::<Result<Vec<_>>>()?;
        let vectors = (0..n_neq).map(|_| dec.f64s()).collect::<Result<Vec<_>>>()?;
        let neq = NonEquivariantLayer::new(neq_kind, neq_weights, eq.input_space(), eq.output_space())?
            .with_power_vectors(vectors)?;

        layers.push(HomotopicLayer::new(eq, neq, dec.f64()?)?);
    }
    HomotopicModel::new(layers, head)
}

pub fn model_to_bytes(model: &HomotopicModel) -> Vec<u8> {
    let mut enc = Encoder::new();
    encode_model(model, &mut enc);
    seal(&MODEL_MAGIC, MODEL_VERSION, &enc.finish())
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<HomotopicModel> {
    let mut dec = Decoder::new(open(&MODEL_MAGIC, MODEL_VERSION, bytes)?);
    let model = decode_model(&mut dec)?;
    dec.finish()?;
    Ok(model)
}
