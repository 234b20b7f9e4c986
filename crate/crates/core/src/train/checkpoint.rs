use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::head::{Head, HeadMode};
use super::model::Model;
use crate::cells::{read_tensors, write_tensors, CellParams, TensorRef};
use crate::error::{Error, Result};
use crate::lattice::{Lattice, StackSpec};
use crate::numerics::Mat;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CheckpointMeta {
    stack: StackSpec,
    head: HeadMode,
    outputs: usize,
    step: u64,
}

/// `<stem>.bin` and `<stem>.json`.
pub fn checkpoint_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

pub fn save_checkpoint(model: &Model, step: u64, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let (bin, js) = checkpoint_paths(stem);
    let meta = CheckpointMeta {
        stack: model.lattice.spec.clone(),
        head: model.head.mode,
        outputs: model.head.w.rows(),
        step,
    };
    let mut tensors = Vec::new();
    for (l, p) in model.lattice.layers.iter().enumerate() {
        let shapes = p
            .tensors
            .weights
            .iter()
            .map(|w| vec![w.rows(), w.cols()])
            .chain(p.tensors.biases.iter().map(|b| vec![b.len()]));
        for ((name, shape), data) in p.tensor_names().into_iter().zip(shapes).zip(p.tensors.slices()) {
            tensors.push(TensorRef {
                name: format!("layer{}.{name}", l + 1),
                shape,
                data,
            });
        }
    }
    tensors.push(TensorRef {
        name: "head.W".into(),
        shape: vec![model.head.w.rows(), model.head.w.cols()],
        data: model.head.w.as_slice(),
    });
    tensors.push(TensorRef {
        name: "head.b".into(),
        shape: vec![model.head.b.len()],
        data: &model.head.b,
    });
    write_tensors(&bin, &js, serde_json::to_value(&meta)?, &tensors)?;
    Ok((bin, js))
}

/// Loads a model and the step it was saved at.
pub fn load_checkpoint(stem: &Path) -> Result<(Model, u64)> {
    let (bin, js) = checkpoint_paths(stem);
    let (manifest, values) = read_tensors(&bin, &js)?;
    let meta: CheckpointMeta = serde_json::from_value(manifest.meta.clone())?;
    meta.stack.validate()?;
    let mut layers: Vec<CellParams> = meta
        .stack
        .layers
        .iter()
        .enumerate()
        .map(|(l, s)| CellParams::zeros(s.kind, meta.stack.input_width(l), s.n_hidden))
        .collect();
    let width = meta.stack.output_width();
    let mut head = Head {
        mode: meta.head,
        w: Mat::zeros(meta.outputs, width),
        b: vec![0.0; meta.outputs],
    };
    let mut model_names = Vec::new();
    let mut slots: Vec<&mut [f64]> = Vec::new();
    for (l, p) in layers.iter_mut().enumerate() {
        model_names.extend(p.tensor_names().into_iter().map(|n| format!("layer{}.{n}", l + 1)));
        slots.extend(p.tensors.slices_mut());
    }
    model_names.push("head.W".into());
    model_names.push("head.b".into());
    slots.push(head.w.as_mut_slice());
    slots.push(&mut head.b);
    if manifest.tensors.len() != slots.len() {
        return Err(Error::Checkpoint(format!(
            "{} tensors stored, architecture needs {}",
            manifest.tensors.len(),
            slots.len()
        )));
    }
    for (((entry, vals), slot), name) in manifest.tensors.iter().zip(values).zip(slots).zip(&model_names) {
        if &entry.name != name || vals.len() != slot.len() {
            return Err(Error::Checkpoint(format!(
                "tensor {} ({} values) does not fit {name} ({} values)",
                entry.name,
                vals.len(),
                slot.len()
            )));
        }
        slot.copy_from_slice(&vals);
    }
    let lattice = Lattice::from_params(meta.stack, layers)?;
    Ok((Model { lattice, head }, meta.step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::CellKind;
    use crate::lattice::{InitMode, LayerSpec};
    use crate::numerics::Rng;

    #[test]
    fn model_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("ckpt");
        let spec = StackSpec {
            layers: vec![LayerSpec::new(CellKind::Lstm, 3), LayerSpec::new(CellKind::Star, 4)],
            n_in: 2,
            t_max: 5,
        };
        let m = Model::new(spec, 3, HeadMode::PerStep, InitMode::Training, &mut Rng::new(1, 0)).unwrap();
        let (bin, _) = save_checkpoint(&m, 17, &stem).unwrap();
        assert_eq!(std::fs::metadata(bin).unwrap().len() as usize, 16 + 8 * m.param_count());
        let (back, step) = load_checkpoint(&stem).unwrap();
        assert_eq!(step, 17);
        assert_eq!(back, m);
    }
}
