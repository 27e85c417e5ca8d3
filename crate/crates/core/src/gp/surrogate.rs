use super::kernel::Kernel;
use super::model::GpModel;
use crate::{Error, Result};

/// Independent GPs for the reward (index 0) and each constraint (`1..=q`).
///
/// Observations may carry a tag so that a batch added together (e.g. the
/// placeholder values of an interrupted experiment) can later be withdrawn.
#[derive(Clone, Debug)]
pub struct SurrogateModel {
    models: Vec<GpModel>,
    tags: Vec<Vec<Option<usize>>>,
}

impl SurrogateModel {
    /// `kernels[0]` is the reward kernel, `kernels[1..]` the constraint kernels.
    pub fn new(kernels: Vec<Kernel>, noise_std: f64) -> Result<Self> {
        if kernels.len() < 2 {
            return Err(Error::InvalidArgument(
                "surrogate needs a reward model and at least one constraint".into(),
            ));
        }
        let models = kernels
            .into_iter()
            .map(|k| GpModel::new(k, noise_std))
            .collect::<Result<Vec<_>>>()?;
        let tags = vec![Vec::new(); models.len()];
        Ok(SurrogateModel { models, tags })
    }

    pub fn from_models(models: Vec<GpModel>) -> Result<Self> {
        if models.len() < 2 {
            return Err(Error::InvalidArgument(
                "surrogate needs a reward model and at least one constraint".into(),
            ));
        }
        let tags = models.iter().map(|m| vec![None; m.len()]).collect();
        Ok(SurrogateModel { models, tags })
    }

    /// Number of function indices, `q + 1`.
    pub fn num_indices(&self) -> usize {
        self.models.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.models.len() - 1
    }

    pub fn model(&self, index: usize) -> Result<&GpModel> {
        self.models.get(index).ok_or_else(|| self.bad_index(index))
    }

    pub fn models(&self) -> &[GpModel] {
        &self.models
    }

    fn bad_index(&self, index: usize) -> Error {
        Error::InvalidArgument(format!(
            "function index {index} out of range 0..={}",
            self.models.len() - 1
        ))
    }

    pub fn add_observation(&mut self, input: &[f64], index: usize, value: f64) -> Result<()> {
        self.add_tagged(input, index, value, None)
    }

    pub fn add_tagged(&mut self, input: &[f64], index: usize, value: f64, tag: Option<usize>) -> Result<()> {
        if index >= self.models.len() {
            return Err(self.bad_index(index));
        }
        self.models[index].add(input.to_vec(), value)?;
        self.tags[index].push(tag);
        Ok(())
    }

    /// Drops every observation carrying `tag`. Returns how many were removed.
    pub fn remove_tagged(&mut self, tag: usize) -> Result<usize> {
        let mut removed = 0;
        for (model, tags) in self.models.iter_mut().zip(self.tags.iter_mut()) {
            let hits = tags.iter().filter(|t| **t == Some(tag)).count();
            if hits == 0 {
                continue;
            }
            removed += hits;
            let keep: Vec<bool> = tags.iter().map(|t| *t != Some(tag)).collect();
            model.retain(|i| keep[i])?;
            tags.retain(|t| *t != Some(tag));
        }
        Ok(removed)
    }

    pub fn posterior(&self, input: &[f64], index: usize) -> Result<(f64, f64)> {
        self.model(index)?.posterior(input)
    }
}

/// Returns `model` with one more observation for function `index`.
pub fn add_observation(mut model: SurrogateModel, input: &[f64], index: usize, value: f64) -> Result<SurrogateModel> {
    model.add_observation(input, index, value)?;
    Ok(model)
}
