//! Self-describing parameter archives (safetensors).
//!
//! Tensors are stored under their layer path; optimizer state lives under
//! `optim.` and is optional. The header metadata carries a format version,
//! the model config as JSON and the training step.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{Device, Tensor};
use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};

use crate::config::ModelConfig;
use crate::detector::Detector;
use crate::error::ModelError;
use crate::optim::AdaGrad;

pub const FORMAT: &str = "rfbtd-checkpoint";
pub const VERSION: &str = "1";
const OPTIM_PREFIX: &str = "optim.";

/// Everything read back from an archive.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub step: u64,
    tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

fn tensor_data(t: &Tensor) -> Result<(Vec<usize>, Vec<f32>), ModelError> {
    Ok((t.dims().to_vec(), t.flatten_all()?.to_vec1::<f32>()?))
}

pub fn save(
    path: &Path,
    model: &Detector,
    optimizer: Option<&AdaGrad>,
    step: u64,
) -> Result<(), ModelError> {
    let mut entries: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    let mut push = |name: String, t: &Tensor| -> Result<(), ModelError> {
        let (shape, data) = tensor_data(t)?;
        let bytes = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        entries.push((name, shape, bytes));
        Ok(())
    };
    for (name, var, _) in model.params().iter() {
        push(name.to_string(), var.as_tensor())?;
    }
    if let Some(opt) = optimizer {
        for (name, acc) in opt.state() {
            push(format!("{OPTIM_PREFIX}{name}"), acc)?;
        }
    }
    let views = entries
        .iter()
        .map(|(n, shape, bytes)| {
            TensorView::new(Dtype::F32, shape.clone(), bytes)
                .map(|v| (n.clone(), v))
                .map_err(|e| ModelError::Checkpoint(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let config = serde_json::to_string(&model.config).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let metadata = HashMap::from([
        ("format".to_string(), FORMAT.to_string()),
        ("version".to_string(), VERSION.to_string()),
        ("config".to_string(), config),
        ("step".to_string(), step.to_string()),
    ]);
    let bytes = safetensors::serialize(views, Some(metadata)).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    // Write then rename so an interrupted save never leaves a torn file.
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

impl Checkpoint {
    pub fn read(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let err = |m: String| ModelError::Checkpoint(m);
        let (_, meta) = SafeTensors::read_metadata(bytes).map_err(|e| err(e.to_string()))?;
        let info = meta.metadata().clone().unwrap_or_default();
        match (info.get("format").map(String::as_str), info.get("version").map(String::as_str)) {
            (Some(FORMAT), Some(VERSION)) => {}
            (Some(FORMAT), v) => return Err(err(format!("unsupported version {v:?}, expected {VERSION}"))),
            _ => return Err(err("not an rfbtd checkpoint".into())),
        }
        let config: ModelConfig = serde_json::from_str(info.get("config").ok_or_else(|| err("missing config".into()))?)
            .map_err(|e| err(format!("bad config: {e}")))?;
        let step = info
            .get("step")
            .map(|s| s.parse().map_err(|_| err(format!("bad step {s:?}"))))
            .transpose()?
            .unwrap_or(0);
        let st = SafeTensors::deserialize(bytes).map_err(|e| err(e.to_string()))?;
        let mut tensors = BTreeMap::new();
        for (name, view) in st.tensors() {
            if view.dtype() != Dtype::F32 {
                return Err(err(format!("{name}: expected f32, found {:?}", view.dtype())));
            }
            let data = view
                .data()
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            tensors.insert(name, (view.shape().to_vec(), data));
        }
        Ok(Self { config, step, tensors })
    }

    /// Copies every model tensor from the archive. Fails without touching
    /// the model if any tensor is missing or has a different shape.
    pub fn load_into(&self, model: &Detector) -> Result<(), ModelError> {
        self.load_prefix(model, "")
    }

    /// Like [`Checkpoint::load_into`], restricted to names under `prefix`
    /// (e.g. `backbone.` for pretrained stem weights).
    pub fn load_prefix(&self, model: &Detector, prefix: &str) -> Result<(), ModelError> {
        let mut plan = Vec::new();
        for (name, var, _) in model.params().iter().filter(|(n, _, _)| n.starts_with(prefix)) {
            let (shape, data) = self.tensors.get(name).ok_or_else(|| ModelError::Missing(name.to_string()))?;
            if shape.as_slice() != var.dims() {
                return Err(ModelError::ShapeMismatch {
                    name: name.to_string(),
                    expected: var.dims().to_vec(),
                    found: shape.clone(),
                });
            }
            plan.push((var, shape, data));
        }
        for (var, shape, data) in plan {
            var.set(&Tensor::from_vec(data.clone(), shape.as_slice(), var.device())?)?;
        }
        Ok(())
    }

    /// Optimizer accumulators, if the archive has them.
    pub fn optimizer_state(&self, device: &Device) -> Result<BTreeMap<String, Tensor>, ModelError> {
        let mut out = BTreeMap::new();
        for (name, (shape, data)) in &self.tensors {
            if let Some(param) = name.strip_prefix(OPTIM_PREFIX) {
                out.insert(param.to_string(), Tensor::from_vec(data.clone(), shape.as_slice(), device)?);
            }
        }
        Ok(out)
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }
}
