//! SVG heatmaps of archives and the Pareto scatter of a comparison.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Result};
use plotters::prelude::*;
use plotters::style::colors::colormaps::ViridisRGB;
use uqd_core::{Archive, Centroids, ReevalResult, VarianceNormalizers};
use uqd_core::metrics::VarianceKind;

use crate::analysis::{pareto_front, ParetoPoint};

pub const RASTER: usize = 256;
const PIXEL: u32 = 2;
const MARGIN: u32 = 30;

fn plot_err<E: std::fmt::Display>(e: E) -> anyhow::Error {
    anyhow!("plotting failed: {e}")
}

/// Cell index of every pixel centre on a `res x res` lattice over `[0, 1]^2`,
/// row-major with row 0 at the top (`y = 1`).
pub fn raster_cells(centroids: &Centroids, res: usize) -> Result<Vec<usize>> {
    if centroids.dim() != 2 {
        bail!("heatmaps need a 2-D descriptor space, got {} dimensions", centroids.dim());
    }
    let mut out = Vec::with_capacity(res * res);
    for row in 0..res {
        let y = 1.0 - (row as f64 + 0.5) / res as f64;
        for col in 0..res {
            let x = (col as f64 + 0.5) / res as f64;
            out.push(centroids.nearest(&[x, y])?);
        }
    }
    Ok(out)
}

/// Pixel holding descriptor `d` on the lattice of [`raster_cells`].
pub fn pixel_of(d: &[f64], res: usize) -> (usize, usize) {
    let idx = |v: f64| ((v * res as f64).floor().max(0.0) as usize).min(res - 1);
    (res - 1 - idx(d[1]), idx(d[0]))
}

/// Colour every pixel whose cell has a value; `None` cells stay background.
pub fn render_heatmap(centroids: &Centroids, values: &[Option<f64>], range: (f64, f64), title: &str) -> Result<String> {
    if values.len() != centroids.len() {
        bail!("heatmap has {} values for {} cells", values.len(), centroids.len());
    }
    let (lo, hi) = range;
    if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        bail!("heatmap range must satisfy min < max, got ({lo}, {hi})");
    }
    let cells = raster_cells(centroids, RASTER)?;
    let side = RASTER as u32 * PIXEL;
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (side + 2 * MARGIN, side + 2 * MARGIN)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        root.draw_text(title, &("sans-serif", 14).into_text_style(&root), (MARGIN as i32, 8))
            .map_err(plot_err)?;
        let m = MARGIN as i32;
        let p = PIXEL as i32;
        for row in 0..RASTER {
            let line = &cells[row * RASTER..(row + 1) * RASTER];
            let mut start = 0;
            // one rectangle per horizontal run of pixels in the same cell
            while start < RASTER {
                let c = line[start];
                let mut end = start + 1;
                while end < RASTER && line[end] == c {
                    end += 1;
                }
                if let Some(v) = values[c] {
                    let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
                    let color = ViridisRGB.get_color(t as f32);
                    let top_left = (m + start as i32 * p, m + row as i32 * p);
                    let bottom_right = (m + end as i32 * p, m + (row as i32 + 1) * p);
                    root.draw(&Rectangle::new([top_left, bottom_right], color.filled()))
                        .map_err(plot_err)?;
                }
                start = end;
            }
        }
        root.draw(&Rectangle::new([(m, m), (m + side as i32, m + side as i32)], BLACK.stroke_width(1)))
            .map_err(plot_err)?;
        let legend = format!("colour range [{lo:.4}, {hi:.4}]");
        root.draw_text(&legend, &("sans-serif", 12).into_text_style(&root), (MARGIN as i32, (side + MARGIN + 8) as i32))
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

/// Best-of-cell fitness.
pub fn fitness_heatmap(archive: &Archive, range: (f64, f64), title: &str) -> Result<String> {
    let values: Vec<Option<f64>> = (0..archive.num_cells())
        .map(|c| archive.best_of_cell(c).map(|r| r.mean_fitness))
        .collect();
    render_heatmap(archive.centroids(), &values, range, title)
}

/// `1 - v / max_v` per reevaluated cell; cells with a zero normaliser show 1.
pub fn reproducibility_heatmap(
    centroids: &Centroids,
    results: &[(usize, ReevalResult)],
    normalizers: &VarianceNormalizers,
    kind: VarianceKind,
    title: &str,
) -> Result<String> {
    let mut values = vec![None; centroids.len()];
    let norm = normalizers.get(kind);
    for (c, r) in results {
        let max = norm[*c];
        values[*c] = Some(if max > 0.0 { 1.0 - (r.variance(kind) / max).min(1.0) } else { 1.0 });
    }
    render_heatmap(centroids, &values, (0.0, 1.0), title)
}

/// Median point of one (algorithm, sampling size) over its replications.
#[derive(Clone, Debug, PartialEq)]
pub struct ParetoMarker {
    pub algorithm: String,
    pub sampling_size: usize,
    pub point: ParetoPoint,
}

/// Marker radius per sampling size, increasing with the size.
pub fn marker_sizes(markers: &[ParetoMarker]) -> Vec<u32> {
    let mut sizes: Vec<usize> = markers.iter().map(|m| m.sampling_size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    markers
        .iter()
        .map(|m| 3 + 2 * sizes.binary_search(&m.sampling_size).unwrap() as u32)
        .collect()
}

pub fn render_pareto_plot(markers: &[ParetoMarker], time_label: &str) -> Result<String> {
    if markers.is_empty() {
        bail!("pareto plot needs at least one point");
    }
    let points: Vec<ParetoPoint> = markers.iter().map(|m| m.point).collect();
    let front = pareto_front(&points);
    let radii = marker_sizes(markers);
    let span = |vals: Vec<f64>| {
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = if hi > lo { 0.08 * (hi - lo) } else { lo.abs().max(1.0) * 0.1 };
        (lo - pad)..(hi + pad)
    };
    let xr = span(points.iter().map(|p| p.time).collect());
    let yr = span(points.iter().map(|p| p.qd).collect());
    let algorithms: BTreeMap<&str, usize> = {
        let mut names: Vec<&str> = markers.iter().map(|m| m.algorithm.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        names.into_iter().enumerate().map(|(i, n)| (n, i)).collect()
    };

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (760, 520)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption("Corrected QD-Score against time to convergence", ("sans-serif", 16))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(70)
            .build_cartesian_2d(xr, yr)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc(time_label)
            .y_desc("corrected QD-Score")
            .draw()
            .map_err(plot_err)?;
        let mut line: Vec<(f64, f64)> = front.iter().map(|&i| (points[i].time, points[i].qd)).collect();
        line.sort_by(|a, b| a.0.total_cmp(&b.0));
        chart
            .draw_series(DashedLineSeries::new(line, 6, 4, BLUE.stroke_width(2)))
            .map_err(plot_err)?;
        for (name, &i) in &algorithms {
            let color = Palette99::pick(i).to_rgba();
            let own: Vec<(f64, f64, u32)> = markers
                .iter()
                .zip(&radii)
                .filter(|(m, _)| m.algorithm == *name)
                .map(|(m, &r)| (m.point.time, m.point.qd, r))
                .collect();
            chart
                .draw_series(own.iter().map(|&(x, y, r)| Circle::new((x, y), r, color.filled())))
                .map_err(plot_err)?
                .label(*name)
                .legend(move |(x, y)| Circle::new((x, y), 4, color.filled()));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::sync::Arc;
    use uqd_core::{generate_cvt, Evaluation, Genotype, RngStream, SolutionRecord};

    fn fills(svg: &str) -> HashSet<String> {
        svg.lines()
            .filter(|l| l.contains("<rect"))
            .flat_map(|l| l.match_indices("fill=\"#").map(move |(i, _)| l[i + 6..i + 13].to_string()))
            .filter(|c| c != "#FFFFFF")
            .collect()
    }

    fn centroids(k: usize) -> Arc<Centroids> {
        Arc::new(generate_cvt(k, 2, 5_000, 20, &RngStream::new(6, 0)).unwrap())
    }

    #[test]
    fn empty_archive_is_background_only() {
        let a = Archive::flat(centroids(32));
        let svg = fitness_heatmap(&a, (0.0, 1.0), "empty").unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(fills(&svg).is_empty(), "{:?}", fills(&svg));
    }

    #[test]
    fn single_cell_is_one_coloured_region() {
        let c = centroids(32);
        let mut a = Archive::flat(Arc::clone(&c));
        let d = c.point(5).to_vec();
        let rec = SolutionRecord::fresh(Genotype::new(vec![0.0]), &Evaluation::new(0.5, d));
        a.try_add(rec, &mut RngStream::new(0, 0).rng()).unwrap();
        let svg = fitness_heatmap(&a, (0.0, 1.0), "one").unwrap();
        assert_eq!(fills(&svg).len(), 1);
        // the coloured runs are exactly the raster pixels of that cell
        let cells = raster_cells(&c, RASTER).unwrap();
        let owned = cells.iter().filter(|&&x| x == 5).count();
        let area: i64 = svg
            .lines()
            .filter(|l| l.contains("<rect") && !l.contains("#FFFFFF") && !l.contains("fill=\"none\""))
            .map(|l| {
                let num = |key: &str| -> i64 {
                    let s = &l[l.find(key).unwrap() + key.len()..];
                    s[..s.find('"').unwrap()].parse().unwrap()
                };
                num("width=\"") * num("height=\"")
            })
            .sum();
        assert_eq!(area, (owned as u32 * PIXEL * PIXEL) as i64);
    }

    #[test]
    fn centroid_pixel_belongs_to_its_cell() {
        let c = centroids(64);
        let cells = raster_cells(&c, RASTER).unwrap();
        for (i, p) in c.iter().enumerate() {
            let (row, col) = pixel_of(p, RASTER);
            let centre = [(col as f64 + 0.5) / RASTER as f64, 1.0 - (row as f64 + 0.5) / RASTER as f64];
            assert_eq!(cells[row * RASTER + col], c.nearest(&centre).unwrap());
            assert_eq!(cells[row * RASTER + col], i, "centroid {i} at {p:?}");
        }
    }

    #[test]
    fn non_planar_descriptors_are_rejected() {
        let c = Arc::new(generate_cvt(8, 3, 1_000, 5, &RngStream::new(0, 0)).unwrap());
        let a = Archive::flat(c);
        assert!(fitness_heatmap(&a, (0.0, 1.0), "3d").unwrap_err().to_string().contains("2-D"));
    }

    fn marker(alg: &str, s: usize, qd: f64, t: f64) -> ParetoMarker {
        ParetoMarker {
            algorithm: alg.into(),
            sampling_size: s,
            point: ParetoPoint::new(qd, t),
        }
    }

    #[test]
    fn marker_size_grows_with_sampling_size() {
        let m = vec![marker("a", 4096, 1.0, 1.0), marker("b", 256, 2.0, 2.0), marker("a", 1024, 0.0, 3.0)];
        assert_eq!(marker_sizes(&m), vec![7, 3, 5]);
    }

    #[test]
    fn pareto_plot_renders() {
        let single = render_pareto_plot(&[marker("me", 256, 1.0, 10.0)], "evaluations").unwrap();
        assert_eq!(single.matches("<circle").count(), 2); // marker and legend swatch
        let m = vec![marker("me", 256, 1.0, 10.0), marker("pas", 1024, 2.0, 20.0), marker("pas", 4096, 0.5, 30.0)];
        let svg = render_pareto_plot(&m, "evaluations").unwrap();
        assert!(svg.contains("me") && svg.contains("pas"));
        assert!(render_pareto_plot(&[], "evaluations").is_err());
    }
}
