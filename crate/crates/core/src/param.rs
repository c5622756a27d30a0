//! Uniform access to the trainable arrays of a component.

use crate::autodiff::{NodeId, Tape};
use crate::tensor::RealMatrix;

#[derive(Debug)]
pub struct ParamView<'a> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

impl ParamView<'_> {
    pub fn to_matrix(&self) -> RealMatrix {
        RealMatrix::from_parts(self.rows, self.cols, self.data.to_vec())
    }
}

#[derive(Debug)]
pub struct ParamViewMut<'a> {
    pub name: String,
    pub data: &'a mut [f64],
}

/// Components list their parameters in a fixed declared order; `params`
/// and `params_mut` must agree on it.
pub trait HasParams {
    fn params(&self) -> Vec<ParamView<'_>>;
    fn params_mut(&mut self) -> Vec<ParamViewMut<'_>>;

    fn num_scalars(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    /// Registers every parameter on `tape` in declared order.
    fn bind_all(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.params()
            .into_iter()
            .map(|p| {
                let m = p.to_matrix();
                tape.param(p.name, m)
            })
            .collect()
    }
}

pub(crate) fn view<'a>(name: impl Into<String>, rows: usize, cols: usize, data: &'a [f64]) -> ParamView<'a> {
    debug_assert_eq!(rows * cols, data.len());
    ParamView {
        name: name.into(),
        rows,
        cols,
        data,
    }
}

pub(crate) fn view_mut<'a>(name: impl Into<String>, data: &'a mut [f64]) -> ParamViewMut<'a> {
    ParamViewMut {
        name: name.into(),
        data,
    }
}

pub(crate) fn prefixed<'a>(prefix: &str, views: Vec<ParamView<'a>>) -> Vec<ParamView<'a>> {
    views
        .into_iter()
        .map(|mut v| {
            v.name = format!("{prefix}.{}", v.name);
            v
        })
        .collect()
}

pub(crate) fn prefixed_mut<'a>(prefix: &str, views: Vec<ParamViewMut<'a>>) -> Vec<ParamViewMut<'a>> {
    views
        .into_iter()
        .map(|mut v| {
            v.name = format!("{prefix}.{}", v.name);
            v
        })
        .collect()
}
