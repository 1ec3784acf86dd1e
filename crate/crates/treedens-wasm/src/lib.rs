//! Browser demo bindings: three interactive views over the estimator
//! stack, each returning a JSON string for the page to render.
//!
//! The heavy lifting lives in plain functions so the demo logic is
//! testable on the host; the `#[wasm_bindgen]` exports are thin wrappers.

use wasm_bindgen::prelude::*;

use treedens::density::{fit_tree_density, root_and_order};
use treedens::evaluation::{identification_experiment, l1_distance_mc, ExperimentConfig};
use treedens::ground_truth::FgmTreeTruth;
use treedens::histograms::Partition1D;
use treedens::mi::{default_bin_widths, mi_matrix};
use treedens::stats::weighted_line_fit;
use treedens::tree::{max_spanning_tree, mi_gap, SpanningTree};

#[cfg(target_arch = "wasm32")]
#[wasm_bindgen(start)]
pub fn start() {
    console_error_panic_hook::set_once();
}

fn truth_from(shape: &str, d: usize, coupling: f64) -> treedens::Result<FgmTreeTruth> {
    let tree = match shape {
        "star" => SpanningTree::star(d, 0),
        _ => SpanningTree::chain(d),
    };
    let couplings = vec![coupling; d - 1];
    FgmTreeTruth::new(tree, &couplings)
}

fn edges_1based(tree: &SpanningTree) -> Vec<(usize, usize)> {
    tree.edges().iter().map(|&(i, j)| (i + 1, j + 1)).collect()
}

/// Synthesize data from a tree truth, estimate the MI matrix, and select
/// a spanning tree. Returns both matrices and both trees.
pub fn run_fit_demo(
    shape: &str,
    d: usize,
    coupling: f64,
    n: usize,
    seed: u64,
) -> treedens::Result<String> {
    let gt = truth_from(shape, d, coupling)?;
    let data = gt.sample(seed, n.max(10));
    let bw = default_bin_widths(data.n(), 1.0, 1.0)?;
    let mi = mi_matrix(&data, Partition1D::new(bw.h_prime)?, None)?;
    let fitted = max_spanning_tree(&mi)?;
    let true_mi = gt.true_mi_matrix()?;
    let optimal = gt.true_optimal_trees()?;
    let identified = optimal.binary_search(&fitted).is_ok();
    let gap = mi_gap(&mi).ok();

    let mi_rows = |m: &treedens::MIMatrix| -> Vec<(usize, usize, f64)> {
        m.pairs().map(|((i, j), v)| (i + 1, j + 1, v)).collect()
    };
    let out = serde_json::json!({
        "d": d,
        "n": data.n(),
        "h_prime": bw.h_prime,
        "true_edges": edges_1based(gt.tree()),
        "fitted_edges": edges_1based(&fitted),
        "identified": identified,
        "mi_true": mi_rows(&true_mi),
        "mi_est": mi_rows(&mi),
        "delta": gap.as_ref().and_then(|g| g.delta),
        "tied_pairs": gap.as_ref().map(|g| g.tied_pairs),
    });
    Ok(out.to_string())
}

/// Fit a bivariate model and tabulate the true and fitted densities on a
/// square display grid, plus a Monte-Carlo L1 estimate.
pub fn run_density_demo(
    coupling: f64,
    n: usize,
    c1: f64,
    seed: u64,
    grid: usize,
) -> treedens::Result<String> {
    let gt = truth_from("chain", 2, coupling)?;
    let n = n.max(10);
    let data = gt.sample(seed, n);
    let bw = default_bin_widths(n, c1, 1.0)?;
    let order = root_and_order(&SpanningTree::chain(2), 1)?;
    let model = fit_tree_density(&data, &order, Partition1D::new(bw.h)?)?;
    let l1 = l1_distance_mc(&model, &gt, 50_000, seed ^ 0x5eed)?;

    let grid = grid.clamp(10, 200);
    let mut truth_values = Vec::with_capacity(grid * grid);
    let mut fitted_values = Vec::with_capacity(grid * grid);
    for row in 0..grid {
        for col in 0..grid {
            let x = (col as f64 + 0.5) / grid as f64;
            let y = (row as f64 + 0.5) / grid as f64;
            truth_values.push(gt.density(&[x, y]));
            fitted_values.push(model.eval_density(&[x, y])?);
        }
    }
    let scatter: Vec<(f64, f64)> = (0..n.min(800))
        .map(|r| {
            let row = data.row(r);
            (row[0], row[1])
        })
        .collect();

    let out = serde_json::json!({
        "grid": grid,
        "n": n,
        "h": bw.h,
        "l1": l1.value,
        "l1_se": l1.std_error,
        "truth": truth_values,
        "fitted": fitted_values,
        "points": scatter,
    });
    Ok(out.to_string())
}

/// Identification frequency and mean L1 error over a geometric n-grid,
/// with a weighted log-log slope when the errors support one.
pub fn run_convergence_demo(
    shape: &str,
    d: usize,
    coupling: f64,
    n_min_log2: u32,
    n_max_log2: u32,
    reps: usize,
    seed: u64,
) -> treedens::Result<String> {
    let gt = truth_from(shape, d, coupling)?;
    let lo = n_min_log2.clamp(6, 16);
    let hi = n_max_log2.clamp(lo + 1, 17);
    let cfg = ExperimentConfig {
        n_grid: (lo..=hi).map(|k| 1usize << k).collect(),
        reps: reps.clamp(2, 20),
        c1: 1.0,
        c2: 1.0,
        seed,
        mc_samples: 5_000,
    };
    let report = identification_experiment(&gt, &cfg)?;
    let xs: Vec<f64> = report.summaries.iter().map(|s| (s.n as f64).ln()).collect();
    let ys: Vec<f64> = report.summaries.iter().map(|s| s.l1_mean.ln()).collect();
    let ws: Vec<f64> = report
        .summaries
        .iter()
        .map(|s| {
            let rel = (s.l1_se / s.l1_mean).max(1e-9);
            1.0 / (rel * rel)
        })
        .collect();
    let (intercept, slope, slope_se) = weighted_line_fit(&xs, &ys, &ws);

    let points: Vec<serde_json::Value> = report
        .summaries
        .iter()
        .map(|s| {
            serde_json::json!({
                "n": s.n,
                "l1_mean": s.l1_mean,
                "l1_se": s.l1_se,
                "freq_identified": s.freq_identified,
            })
        })
        .collect();
    let out = serde_json::json!({
        "points": points,
        "slope": slope,
        "intercept": intercept,
        "slope_half_width": 1.96 * slope_se,
        "delta": report.delta,
    });
    Ok(out.to_string())
}

#[wasm_bindgen]
pub fn fit_demo(
    shape: &str,
    d: usize,
    coupling: f64,
    n: usize,
    seed: u32,
) -> Result<String, JsValue> {
    run_fit_demo(shape, d, coupling, n, seed as u64).map_err(to_js)
}

#[wasm_bindgen]
pub fn density_demo(
    coupling: f64,
    n: usize,
    c1: f64,
    seed: u32,
    grid: usize,
) -> Result<String, JsValue> {
    run_density_demo(coupling, n, c1, seed as u64, grid).map_err(to_js)
}

#[wasm_bindgen]
pub fn convergence_demo(
    shape: &str,
    d: usize,
    coupling: f64,
    n_min_log2: u32,
    n_max_log2: u32,
    reps: usize,
    seed: u32,
) -> Result<String, JsValue> {
    run_convergence_demo(
        shape,
        d,
        coupling,
        n_min_log2,
        n_max_log2,
        reps,
        seed as u64,
    )
    .map_err(to_js)
}

fn to_js(err: treedens::Error) -> JsValue {
    JsValue::from_str(&err.to_string())
}
