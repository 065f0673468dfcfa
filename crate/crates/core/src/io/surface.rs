//! Gridded surfaces over a two-dimensional operating box, for plotting.

use std::path::Path;

use crate::active::evaluate_criterion;
use crate::error::{Error, Result};
use crate::gpr_lpv::{ElementId, GprLpvModel};

use super::format_f64;
use super::table::write_table;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurfaceKind {
    /// The summed posterior variance `g(θ)`.
    Criterion,
    /// Posterior mean and variance of one matrix element.
    Element(ElementId),
}

/// Writes `theta_1,theta_2,g` (or `theta_1,theta_2,mean,variance`) on the
/// boundary-inclusive `resolution × resolution` grid, θ₂ varying fastest.
pub fn export_surface(model: &GprLpvModel, kind: SurfaceKind, resolution: usize, path: &Path) -> Result<()> {
    if model.sched_dim() != 2 {
        return Err(Error::UnsupportedDimension(format!(
            "surface export needs a 2-dimensional operating box, this model has {}",
            model.sched_dim()
        )));
    }
    let points = model.operating_box().grid(&[resolution, resolution])?;
    let coords = |i: usize| points[i].coords().iter().map(|c| format_f64(*c));
    let (header, rows): (Vec<&str>, Vec<Vec<String>>) = match kind {
        SurfaceKind::Criterion => {
            let g = evaluate_criterion(model, &points)?;
            let rows = (0..points.len())
                .map(|i| coords(i).chain([format_f64(g[i])]).collect())
                .collect();
            (vec!["theta_1", "theta_2", "g"], rows)
        }
        SurfaceKind::Element(id) => {
            let gp = model.element(id)?;
            let rows = points
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let (mean, var) = gp.predict(p)?;
                    Ok(coords(i).chain([format_f64(mean), format_f64(var)]).collect())
                })
                .collect::<Result<_>>()?;
            (vec!["theta_1", "theta_2", "mean", "variance"], rows)
        }
    };
    let header: Vec<String> = header.into_iter().map(str::to_string).collect();
    write_table(path, "surface", &header, &rows)
}
