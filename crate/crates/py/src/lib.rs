//! Python bindings: regions, token mapping, budget fitting, compression and
//! inner pruning on the toy decoder.

use crop_core::grid::{parse_region as parse, recall as region_recall, region_to_tokens as to_tokens, Region, TokenGrid};
use crop_core::ilp::{self, ModelConfig, MultimodalSequence, PositionPolicy, PruneConfig};
use crop_core::localizer::{self, BudgetSpec};
use crop_core::plc::{self, PlcConfig};
use crop_core::tensor::Matrix;
use crop_core::tokens::VisualTokens;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn grid(side: usize, views: usize) -> PyResult<TokenGrid> {
    TokenGrid::new(side, views).map_err(err)
}

fn matrix(rows: Vec<Vec<f64>>, dim: usize) -> PyResult<Matrix> {
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, dim));
    }
    Matrix::from_rows(&rows).map_err(err)
}

fn visual(rows: Vec<Vec<f64>>, side: usize, views: usize) -> PyResult<VisualTokens> {
    let dim = rows.first().map_or(0, Vec::len);
    VisualTokens::new(grid(side, views)?, matrix(rows, dim)?).map_err(err)
}

#[pyclass(name = "Region", module = "crop_py", frozen, eq, hash, from_py_object)]
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct PyRegion(Region);

#[pymethods]
impl PyRegion {
    #[new]
    fn new(x_min: i64, y_min: i64, x_max: i64, y_max: i64) -> PyResult<Self> {
        Region::new(x_min, y_min, x_max, y_max).map(PyRegion).map_err(err)
    }

    #[getter]
    fn x_min(&self) -> u8 {
        self.0.x_min()
    }

    #[getter]
    fn y_min(&self) -> u8 {
        self.0.y_min()
    }

    #[getter]
    fn x_max(&self) -> u8 {
        self.0.x_max()
    }

    #[getter]
    fn y_max(&self) -> u8 {
        self.0.y_max()
    }

    fn block_area(&self) -> u32 {
        self.0.block_area()
    }

    fn __str__(&self) -> String {
        self.0.format()
    }

    fn __repr__(&self) -> String {
        format!("Region({}, {}, {}, {})", self.0.x_min(), self.0.y_min(), self.0.x_max(), self.0.y_max())
    }
}

/// Parses `"x0 y0 x1 y1"`; returns the region and a description of each repair.
#[pyfunction]
fn parse_region(text: &str) -> PyResult<(PyRegion, Vec<String>)> {
    let p = parse(text).map_err(err)?;
    Ok((PyRegion(p.region), p.repairs.iter().map(|r| r.to_string()).collect()))
}

#[pyfunction]
#[pyo3(signature = (region, side, views = 1))]
fn region_to_tokens(region: &PyRegion, side: usize, views: usize) -> PyResult<Vec<usize>> {
    Ok(to_tokens(&region.0, &grid(side, views)?).into_vec())
}

#[pyfunction]
fn recall(gt: &PyRegion, pred: &PyRegion) -> f64 {
    region_recall(&gt.0, &pred.0)
}

#[pyfunction]
fn mean_recall<'py>(py: Python<'py>, gt: Vec<PyRegion>, pred: Vec<PyRegion>) -> PyResult<Bound<'py, PyDict>> {
    let gt: Vec<Region> = gt.into_iter().map(|r| r.0).collect();
    let pred: Vec<Region> = pred.into_iter().map(|r| r.0).collect();
    let s = localizer::mean_recall(&gt, &pred).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("count", s.count)?;
    d.set_item("mean", s.mean)?;
    d.set_item("above_0_5", s.above_0_5)?;
    d.set_item("above_0_7", s.above_0_7)?;
    d.set_item("above_0_9", s.above_0_9)?;
    Ok(d)
}

/// Resizes `region` so its kept-token count is closest to the rate's target.
#[pyfunction]
#[pyo3(signature = (region, rate, side, views = 1))]
fn fit_budget(region: &PyRegion, rate: f64, side: usize, views: usize) -> PyResult<PyRegion> {
    let spec = BudgetSpec::new(rate, grid(side, views)?).map_err(err)?;
    Ok(PyRegion(localizer::fit_budget(&region.0, &spec)))
}

#[pyclass(name = "PlcParams", module = "crop_py", frozen)]
struct PyPlcParams(plc::PlcParams);

#[pymethods]
impl PyPlcParams {
    #[new]
    #[pyo3(signature = (dim, seed = 0, contextual_queries = 64, noncontextual_queries = 4, anchor_tokens = 64))]
    fn new(dim: usize, seed: u64, contextual_queries: usize, noncontextual_queries: usize, anchor_tokens: usize) -> PyResult<Self> {
        let config = PlcConfig {
            contextual_queries,
            noncontextual_queries,
            anchor_tokens,
        };
        plc::PlcParams::init(dim, config, seed).map(PyPlcParams).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn output_rows(&self) -> usize {
        self.0.config().output_rows()
    }
}

/// Compresses a `side × side × views` token grid to a fixed number of rows.
#[pyfunction]
#[pyo3(signature = (tokens, side, region, params, views = 1, ablate = false))]
fn compress(tokens: Vec<Vec<f64>>, side: usize, region: &PyRegion, params: &PyPlcParams, views: usize, ablate: bool) -> PyResult<Vec<Vec<f64>>> {
    let tokens = visual(tokens, side, views)?;
    let out = if ablate {
        plc::compress_ablated(&tokens, &region.0, &params.0).map_err(err)?
    } else {
        plc::compress(&tokens, &region.0, &params.0).map_err(err)?.tokens
    };
    Ok(out.to_rows())
}

#[pyclass(name = "ToyTransformer", module = "crop_py", frozen)]
struct PyToyTransformer(ilp::ToyTransformer);

#[pymethods]
impl PyToyTransformer {
    #[new]
    #[pyo3(signature = (layers = 8, heads = 4, dim = 64, mlp = 128, seed = 0, tie_qk = true))]
    fn new(layers: usize, heads: usize, dim: usize, mlp: usize, seed: u64, tie_qk: bool) -> PyResult<Self> {
        ilp::ToyTransformer::new(ModelConfig {
            layers,
            heads,
            dim,
            mlp,
            seed,
            tie_qk,
        })
        .map(PyToyTransformer)
        .map_err(err)
    }

    /// Baseline forward and region-pruned forward after block `layer`.
    /// Returns proxy quality, kept counts and the pruned run's final rows.
    #[pyo3(signature = (system, visual_tokens, query, side, region, layer = 2, views = 1, reindex = false))]
    #[allow(clippy::too_many_arguments)]
    fn forward_ilp<'py>(
        &self,
        py: Python<'py>,
        system: Vec<Vec<f64>>,
        visual_tokens: Vec<Vec<f64>>,
        query: Vec<Vec<f64>>,
        side: usize,
        region: &PyRegion,
        layer: usize,
        views: usize,
        reindex: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let dim = self.0.config().dim;
        let seq = MultimodalSequence::new(matrix(system, dim)?, visual(visual_tokens, side, views)?, matrix(query, dim)?).map_err(err)?;
        let policy = if reindex { PositionPolicy::Reindex } else { PositionPolicy::KeepOriginal };
        let pc = PruneConfig::new(layer, region.0, policy, self.0.config()).map_err(err)?;
        let base = self.0.forward_baseline(&seq).map_err(err)?;
        let pruned = self.0.forward_ilp(&seq, &pc).map_err(err)?;
        let report = pruned.report.clone().expect("pruned runs carry a report");
        let d = PyDict::new(py);
        d.set_item("proxy_quality", ilp::proxy_quality(&base, &pruned))?;
        d.set_item("visual_kept", report.visual_kept)?;
        d.set_item("rate", report.rate)?;
        d.set_item("sequence_after", report.sequence_after)?;
        d.set_item("rows", pruned.rows.clone())?;
        d.set_item("final", pruned.final_hidden().to_rows())?;
        Ok(d)
    }
}

#[pyfunction]
fn count_flops(len_before: u64, len_after: u64, prune_after: u64, layers: u64, dim: u64, heads: u64, mlp: u64) -> u64 {
    ilp::count_flops(len_before, len_after, prune_after, layers, dim, heads, mlp)
}

#[pymodule]
fn crop_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRegion>()?;
    m.add_class::<PyPlcParams>()?;
    m.add_class::<PyToyTransformer>()?;
    m.add_function(wrap_pyfunction!(parse_region, m)?)?;
    m.add_function(wrap_pyfunction!(region_to_tokens, m)?)?;
    m.add_function(wrap_pyfunction!(recall, m)?)?;
    m.add_function(wrap_pyfunction!(mean_recall, m)?)?;
    m.add_function(wrap_pyfunction!(fit_budget, m)?)?;
    m.add_function(wrap_pyfunction!(compress, m)?)?;
    m.add_function(wrap_pyfunction!(count_flops, m)?)?;
    Ok(())
}
