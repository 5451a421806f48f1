use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::InverseModel;
use crate::gp::GpModel;
use crate::kernels::LayoutKind;
use crate::rbd::JointVector;
use crate::{Error, Result};

/// One independent GP per joint torque.
#[derive(Debug, Clone)]
pub struct InverseDynamicsEnsemble {
    models: Vec<GpModel>,
}

impl InverseDynamicsEnsemble {
    pub fn new(models: Vec<GpModel>) -> Result<Self> {
        let n = models.len();
        if n == 0 {
            return Err(Error::Config("ensemble needs at least one model".into()));
        }
        for m in &models {
            let l = m.layout();
            if l.kind != LayoutKind::Inverse || l.dof != n {
                return Err(Error::Config(format!(
                    "ensemble of {n} joints needs [q | q̇ | q̈] models with {n} joints, found {:?} with {}",
                    l.kind, l.dof
                )));
            }
        }
        Ok(InverseDynamicsEnsemble { models })
    }

    pub fn models(&self) -> &[GpModel] {
        &self.models
    }

    pub fn dataset_fingerprint(&self) -> Option<&str> {
        self.models[0].dataset_fingerprint.as_deref()
    }

    pub fn model_path(dir: &Path, joint: usize) -> PathBuf {
        dir.join(format!("joint_{}.json", joint + 1))
    }

    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        self.models
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let p = Self::model_path(dir, i);
                m.save(&p)?;
                Ok(p)
            })
            .collect()
    }

    /// Load `joint_1.json, joint_2.json, …` from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut models = Vec::new();
        while Self::model_path(dir, models.len()).exists() {
            models.push(GpModel::load(&Self::model_path(dir, models.len()))?);
        }
        if models.is_empty() {
            return Err(Error::Config(format!("no joint_1.json model in {}", dir.display())));
        }
        Self::new(models)
    }
}

impl InverseModel for InverseDynamicsEnsemble {
    fn dof(&self) -> usize {
        self.models.len()
    }

    fn predict_torques(&self, inputs: &[Vec<f64>]) -> Result<Vec<JointVector>> {
        let per_joint: Vec<Vec<f64>> = self
            .models
            .iter()
            .map(|m| m.predict_many(inputs))
            .collect::<Result<_>>()?;
        Ok((0..inputs.len())
            .into_par_iter()
            .map(|t| JointVector::from_iterator(self.models.len(), per_joint.iter().map(|p| p[t])))
            .collect())
    }
}
