use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for Params<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Params<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        let name = name.into();
        if let Some(i) = self.position(&name) {
            self.tensors[i] = tensor;
        } else {
            self.names.push(name);
            self.tensors.push(tensor);
        }
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.position(name)
            .map(|i| &self.tensors[i])
            .ok_or_else(|| Error::InvalidArgument(format!("missing parameter `{name}`")))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// `name=norm` pairs, for diagnostics.
    pub fn norms_summary(&self) -> String {
        self.iter()
            .map(|(n, t)| format!("{n}={:.4e}", t.norm()))
            .collect::<Vec<_>>()
            .join(", ")
    }
}
