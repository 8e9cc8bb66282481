use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{Adjuster, AdjustmentModel, FitTask};
use crate::error::{RdError, Result};
use crate::linalg::{dot, weighted_lstsq, Mat};

/// Linear adjustment read off a joint kernel-weighted regression of the
/// outcome on `(1{X>=0}, X^j, 1{X>=0} X^j for j <= order, 1, Z)` using the
/// second-stage kernel and bandwidth; `η̂(z) = z'γ̂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Eq4Linear {
    pub order: usize,
}

struct LinearZ(Vec<f64>);

impl AdjustmentModel for LinearZ {
    fn eta(&self, z: &[f64]) -> f64 {
        dot(&self.0, z)
    }
}

impl Adjuster for Eq4Linear {
    fn name(&self) -> String {
        String::from("linear-joint")
    }

    fn fit_all(&self, task: &FitTask<'_>) -> Result<Vec<Box<dyn AdjustmentModel>>> {
        let stage = task.second_stage.ok_or_else(|| {
            RdError::InvalidArgument(
                "joint linear adjustment needs a second-stage bandwidth".into(),
            )
        })?;
        let data = task.data;
        let d = data.z.ncols();
        let lead = 2 * self.order + 2;
        let cols = lead + d;
        let mut out: Vec<Box<dyn AdjustmentModel>> = Vec::with_capacity(task.targets());
        for t in 0..task.targets() {
            let rows: Vec<usize> = task
                .training_rows(t)
                .into_iter()
                .filter(|&i| stage.kernel.eval(data.x[i] / stage.h) > 0.0)
                .collect();
            if rows.is_empty() {
                return Err(RdError::NoTrainingData {
                    fold: t,
                    reason: format!("no training rows within bandwidth {}", stage.h),
                });
            }
            let mut a = Mat::zeros(rows.len(), cols);
            let mut y = vec![0.0; rows.len()];
            let mut w = vec![0.0; rows.len()];
            for (r, &i) in rows.iter().enumerate() {
                let x = data.x[i];
                let treat = if x >= 0.0 { 1.0 } else { 0.0 };
                a[(r, 0)] = treat;
                let mut pw = 1.0;
                for j in 1..=self.order {
                    pw *= x;
                    a[(r, 2 * j - 1)] = pw;
                    a[(r, 2 * j)] = treat * pw;
                }
                a[(r, lead - 1)] = 1.0;
                for (k, zk) in data.z.row(i).iter().enumerate() {
                    a[(r, lead + k)] = *zk;
                }
                y[r] = task.outcome[i];
                w[r] = stage.kernel.eval(x / stage.h);
            }
            let sol = weighted_lstsq(&a, &y, &w, 1e-10);
            out.push(Box::new(LinearZ(sol.coef[lead..].to_vec())));
        }
        Ok(out)
    }
}
