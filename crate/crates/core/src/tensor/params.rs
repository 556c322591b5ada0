use std::sync::Arc;

use crate::error::{Error, Result};

use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl Param {
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access; clones the buffer if a live graph still references it.
    pub fn data_mut(&mut self) -> &mut Vec<f64> {
        Arc::make_mut(&mut self.data)
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Ordered, named collection of learnable tensors.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<ParamId> {
        let name = name.into();
        if shape.iter().product::<usize>() != data.len() || shape.iter().any(|&e| e == 0) {
            return Err(Error::dim("ParamStore::add", &shape, &[data.len()]));
        }
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::Parameter(format!("duplicate parameter name `{name}`")));
        }
        self.params.push(Param {
            name,
            shape,
            data: Arc::new(data),
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param)> {
        self.params.iter_mut().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn total_numel(&self) -> usize {
        self.params.iter().map(Param::numel).sum()
    }

    /// Graph leaf for parameter `id`; shares the buffer, no copy.
    pub fn leaf(&self, id: ParamId) -> Tensor {
        let p = &self.params[id.0];
        Tensor::param(id, p.shape.clone(), Arc::clone(&p.data)).expect("store keeps shapes valid")
    }

    /// Replaces every buffer from `other`, which must have identical names and shapes.
    pub fn copy_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Parameter("parameter stores differ in length".into()));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name || dst.shape != src.shape {
                return Err(Error::Parameter(format!(
                    "parameter `{}` {:?} does not match `{}` {:?}",
                    dst.name, dst.shape, src.name, src.shape
                )));
            }
            dst.data = Arc::clone(&src.data);
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.data.iter().all(|v| v.is_finite()))
    }
}
