//! Multi-panel figures: a strip of groups or a label × prediction matrix.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use base64::Engine as _;
use image::{ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::Layout;
use crate::nap::NapMatrix;
use crate::render::colormap::{colorize, WHITE};
use crate::render::font::{draw_text, text_width, ADVANCE, GLYPH_HEIGHT};
use crate::render::interpolate::{Interpolator, TopoImage};
use crate::render::order::order_groups;

const PAD: u32 = 4;
const TEXT_COLOR: [u8; 3] = [0, 0, 0];
const CONFUSION_SEPARATOR: &str = "->";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    #[default]
    Strip,
    Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub group_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

impl GridCell {
    pub fn new(group_id: impl Into<String>) -> Self {
        Self { group_id: group_id.into(), row: None, col: None, caption: None }
    }
}

/// Which groups go where. Strip cells without positions fill one row; in
/// confusion mode ids of the form `label->prediction` pick their cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: Vec<GridCell>,
    #[serde(default)]
    pub mode: GridMode,
    #[serde(default)]
    pub sort: bool,
}

impl GridSpec {
    pub fn strip<S: AsRef<str>>(group_ids: &[S], sort: bool) -> Self {
        Self { rows: group_ids.iter().map(|g| GridCell::new(g.as_ref())).collect(), mode: GridMode::Strip, sort }
    }

    pub fn confusion<S: AsRef<str>>(group_ids: &[S]) -> Self {
        Self { rows: group_ids.iter().map(|g| GridCell::new(g.as_ref())).collect(), mode: GridMode::Confusion, sort: false }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("grid spec serializes") + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub resolution: usize,
    pub captions: bool,
    /// Seed for the duplicate-point jitter.
    pub seed: u64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { resolution: 100, captions: true, seed: 0 }
    }
}

/// A placed panel: `None` image means a blank cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub row: usize,
    pub col: usize,
    pub image: Option<TopoImage>,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub n_rows: usize,
    pub n_cols: usize,
    pub panels: Vec<Panel>,
    pub vmax: f64,
    pub resolution: usize,
    pub captions: bool,
    /// Axis labels for confusion figures: `(rows, cols)`.
    pub axes: Option<(Vec<String>, Vec<String>)>,
}

fn split_confusion(id: &str) -> Option<(&str, &str)> {
    id.split_once(CONFUSION_SEPARATOR)
}

fn push_unique(axis: &mut Vec<String>, label: &str) {
    if !axis.iter().any(|l| l == label) {
        axis.push(label.to_string());
    }
}

/// Cell positions for every entry of `spec`, plus confusion axes.
fn place(spec: &GridSpec, nap: &NapMatrix) -> Result<(Vec<(usize, usize, GridCell)>, Option<(Vec<String>, Vec<String>)>)> {
    match spec.mode {
        GridMode::Strip => {
            let explicit = spec.rows.iter().any(|c| c.row.is_some() || c.col.is_some());
            let mut cells = spec.rows.clone();
            if spec.sort && !explicit {
                let present: Vec<usize> = cells.iter().filter_map(|c| nap.group_index(&c.group_id)).collect();
                if present.len() == cells.len() && present.len() >= 2 {
                    let order = order_groups(&nap.select_groups(&present));
                    cells = order.into_iter().map(|k| spec.rows[k].clone()).collect();
                }
            }
            Ok((cells.into_iter().enumerate().map(|(k, c)| (c.row.unwrap_or(0), c.col.unwrap_or(k), c)).collect(), None))
        }
        GridMode::Confusion => {
            // a square matrix over every label seen as either truth or prediction
            let mut labels: Vec<String> = Vec::new();
            for cell in &spec.rows {
                if let Some((truth, pred)) = split_confusion(&cell.group_id) {
                    push_unique(&mut labels, truth);
                    push_unique(&mut labels, pred);
                }
            }
            let mut placed = Vec::new();
            for cell in &spec.rows {
                let pos = match (cell.row, cell.col) {
                    (Some(r), Some(c)) => (r, c),
                    _ => {
                        let (truth, pred) = split_confusion(&cell.group_id).ok_or_else(|| {
                            Error::invalid(format!("confusion cell {:?} needs a row/col or a `label->prediction` id", cell.group_id))
                        })?;
                        let r = labels.iter().position(|l| l == truth).expect("collected above");
                        let c = labels.iter().position(|l| l == pred).expect("collected above");
                        (r, c)
                    }
                };
                placed.push((pos.0, pos.1, cell.clone()));
            }
            let axes = if labels.is_empty() { None } else { Some((labels.clone(), labels)) };
            Ok((placed, axes))
        }
    }
}

/// Interpolates one panel per requested group over `layout`.
///
/// All panels share `vmax`, the largest absolute color value among the groups
/// shown. Groups missing from `nap` and unfilled confusion cells are blank.
pub fn render_grid(nap: &NapMatrix, layout: &Layout, spec: &GridSpec, opts: &RenderOptions) -> Result<Figure> {
    if layout.neuron_ids != nap.neuron_ids {
        return Err(Error::NeuronIdMismatch);
    }
    let (placed, axes) = place(spec, nap)?;
    let shown: Vec<usize> = placed.iter().filter_map(|(_, _, c)| nap.group_index(&c.group_id)).collect();
    let vmax = shown
        .iter()
        .flat_map(|&g| nap.color_values.column(g).to_vec())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let interp = Interpolator::new(layout, opts.resolution, opts.seed)?;

    let mut n_rows = 0;
    let mut n_cols = 0;
    let mut panels = Vec::with_capacity(placed.len());
    for (row, col, cell) in placed {
        n_rows = n_rows.max(row + 1);
        n_cols = n_cols.max(col + 1);
        let image = match nap.group_index(&cell.group_id) {
            Some(g) => {
                let values = nap.color_values.column(g).to_vec();
                Some(interp.image(&values, &cell.group_id, vmax))
            }
            None => {
                log::warn!("group {:?} is not in the NAP matrix; leaving its cell blank", cell.group_id);
                None
            }
        };
        panels.push(Panel { row, col, image, caption: cell.caption.unwrap_or(cell.group_id) });
    }
    if let Some((r, c)) = &axes {
        n_rows = n_rows.max(r.len());
        n_cols = n_cols.max(c.len());
    }
    Ok(Figure { n_rows, n_cols, panels, vmax, resolution: opts.resolution, captions: opts.captions, axes })
}

fn fit_text(text: &str, width: u32) -> String {
    let max_chars = ((width + 1) / ADVANCE) as usize;
    text.chars().take(max_chars).collect()
}

struct Geometry {
    left: u32,
    top: u32,
    cell_w: u32,
    cell_h: u32,
    caption_h: u32,
    width: u32,
    height: u32,
}

impl Figure {
    pub fn panel(&self, row: usize, col: usize) -> Option<&Panel> {
        self.panels.iter().find(|p| p.row == row && p.col == col)
    }

    fn geometry(&self) -> Geometry {
        let r = self.resolution as u32;
        let caption_h = if self.captions { GLYPH_HEIGHT + PAD } else { 0 };
        let (left, top) = match (&self.axes, self.captions) {
            (Some((rows, _)), true) => {
                let widest = rows.iter().map(|l| text_width(l)).max().unwrap_or(0);
                (widest + 2 * PAD, GLYPH_HEIGHT + 2 * PAD)
            }
            _ => (0, 0),
        };
        let cell_w = r + PAD;
        let cell_h = r + caption_h + PAD;
        Geometry {
            left,
            top,
            cell_w,
            cell_h,
            caption_h,
            width: left + PAD + self.n_cols as u32 * cell_w,
            height: top + PAD + self.n_rows as u32 * cell_h,
        }
    }

    fn origin(&self, g: &Geometry, row: usize, col: usize) -> (u32, u32) {
        (g.left + PAD + col as u32 * g.cell_w, g.top + PAD + row as u32 * g.cell_h)
    }

    /// The whole figure as one raster.
    pub fn to_rgb(&self) -> RgbImage {
        let g = self.geometry();
        let mut canvas = RgbImage::from_pixel(g.width, g.height, Rgb(WHITE));
        let r = self.resolution as u32;
        for panel in &self.panels {
            let (x0, y0) = self.origin(&g, panel.row, panel.col);
            if let Some(img) = &panel.image {
                image::imageops::replace(&mut canvas, &colorize(img), x0 as i64, y0 as i64);
            }
            if self.captions {
                draw_text(&mut canvas, x0, y0 + r + PAD / 2, &fit_text(&panel.caption, r), TEXT_COLOR);
            }
        }
        if let (Some((rows, cols)), true) = (&self.axes, self.captions) {
            for (k, label) in rows.iter().enumerate() {
                let (_, y0) = self.origin(&g, k, 0);
                draw_text(&mut canvas, PAD, y0 + (r - GLYPH_HEIGHT) / 2, label, TEXT_COLOR);
            }
            for (k, label) in cols.iter().enumerate() {
                let (x0, _) = self.origin(&g, 0, k);
                draw_text(&mut canvas, x0, PAD, &fit_text(label, r), TEXT_COLOR);
            }
        }
        canvas
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        self.to_rgb().save_with_format(path, ImageFormat::Png)?;
        Ok(())
    }

    /// SVG with each panel embedded as a PNG and captions as text.
    pub fn to_svg(&self) -> Result<String> {
        let g = self.geometry();
        let r = self.resolution as u32;
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
            w = g.width,
            h = g.height
        );
        for panel in &self.panels {
            let (x0, y0) = self.origin(&g, panel.row, panel.col);
            if let Some(img) = &panel.image {
                let mut png = Vec::new();
                colorize(img).write_to(&mut Cursor::new(&mut png), ImageFormat::Png)?;
                let data = base64::engine::general_purpose::STANDARD.encode(&png);
                out += &format!(
                    "<image x=\"{x0}\" y=\"{y0}\" width=\"{r}\" height=\"{r}\" style=\"image-rendering:pixelated\" href=\"data:image/png;base64,{data}\"/>\n"
                );
            }
            if self.captions {
                out += &svg_text(x0, y0 + r + g.caption_h - PAD / 2, &panel.caption);
            }
        }
        if let (Some((rows, cols)), true) = (&self.axes, self.captions) {
            for (k, label) in rows.iter().enumerate() {
                let (_, y0) = self.origin(&g, k, 0);
                out += &svg_text(PAD, y0 + r / 2, label);
            }
            for (k, label) in cols.iter().enumerate() {
                let (x0, _) = self.origin(&g, 0, k);
                out += &svg_text(x0, PAD + GLYPH_HEIGHT, label);
            }
        }
        out += "</svg>\n";
        Ok(out)
    }

    pub fn write_svg(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_svg()?).map_err(|e| Error::io(path, e))
    }
}

fn svg_text(x: u32, y: u32, text: &str) -> String {
    let escaped = text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
    format!("<text x=\"{x}\" y=\"{y}\" font-family=\"monospace\" font-size=\"9\">{escaped}</text>\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::Method;
    use crate::nap::InputMode;
    use ndarray::{array, Array2};

    fn fixture(group_ids: &[&str], colors: Array2<f64>) -> (NapMatrix, Layout) {
        let n = colors.nrows();
        let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let nap = NapMatrix {
            layout_features: colors.clone(),
            color_values: colors,
            group_ids: group_ids.iter().map(|s| s.to_string()).collect(),
            neuron_ids: ids.clone(),
            mode: InputMode::Naps,
            seed: 0,
        };
        let coords = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let layout = Layout { coords, method: Method::Pca, seed: 0, params: Default::default(), neuron_ids: ids };
        (nap, layout)
    }

    #[test]
    fn strip_sorting_follows_group_order() {
        let colors = array![[1.0, -1.0, 0.9], [0.5, -0.5, 0.5], [0.0, 0.1, 0.0], [-1.0, 1.0, -1.0]];
        let (nap, layout) = fixture(&["a", "b", "c"], colors);
        let fig = render_grid(&nap, &layout, &GridSpec::strip(&["a", "b", "c"], true), &RenderOptions::default()).unwrap();
        let order: Vec<&str> = (0..3).map(|c| fig.panel(0, c).unwrap().caption.as_str()).collect();
        assert_eq!(order, vec!["a", "c", "b"]);
        assert_eq!(fig.vmax, 1.0);
    }

    #[test]
    fn single_group_uses_its_own_vmax() {
        let colors = array![[0.2, 5.0], [0.1, 0.0], [-0.3, 0.0], [0.0, 0.0]];
        let (nap, layout) = fixture(&["a", "b"], colors);
        let fig = render_grid(&nap, &layout, &GridSpec::strip(&["a"], false), &RenderOptions::default()).unwrap();
        assert_eq!(fig.vmax, 0.3);
        assert_eq!((fig.n_rows, fig.n_cols), (1, 1));
    }

    #[test]
    fn confusion_leaves_missing_cells_blank() {
        let colors = array![[1.0, 0.5, -1.0], [0.0, 0.5, 1.0], [0.3, 0.0, 0.0], [0.0, 0.1, 0.2]];
        let (nap, layout) = fixture(&["0->0", "1->1", "0->1"], colors);
        let fig = render_grid(&nap, &layout, &GridSpec::confusion(&["0->0", "1->1", "0->1"]), &RenderOptions::default()).unwrap();
        assert_eq!((fig.n_rows, fig.n_cols), (2, 2));
        assert!(fig.panel(0, 1).unwrap().image.is_some());
        assert!(fig.panel(1, 0).is_none());
        let rgb = fig.to_rgb();
        let g = fig.geometry();
        let (x0, y0) = fig.origin(&g, 1, 0);
        for y in y0..y0 + 100 {
            for x in x0..x0 + 100 {
                assert_eq!(rgb.get_pixel(x, y).0, WHITE);
            }
        }
    }

    #[test]
    fn mismatched_ids_are_rejected() {
        let (nap, mut layout) = fixture(&["a"], Array2::zeros((4, 1)));
        layout.neuron_ids[0] = "x".into();
        assert!(matches!(render_grid(&nap, &layout, &GridSpec::strip(&["a"], false), &RenderOptions::default()), Err(Error::NeuronIdMismatch)));
    }

    #[test]
    fn svg_embeds_every_panel() {
        let (nap, layout) = fixture(&["a", "b"], array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [0.2, 0.1]]);
        let fig = render_grid(&nap, &layout, &GridSpec::strip(&["a", "b"], false), &RenderOptions::default()).unwrap();
        let svg = fig.to_svg().unwrap();
        assert_eq!(svg.matches("data:image/png;base64,").count(), 2);
        assert!(svg.contains(">a</text>"));
    }

    #[test]
    fn grid_spec_json_round_trip() {
        let text = r#"{"rows":[{"group_id":"7"},{"group_id":"3","caption":"three"}],"mode":"strip","sort":true}"#;
        let spec: GridSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.rows[1].caption.as_deref(), Some("three"));
        assert!(spec.sort);
        let back: GridSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }
}
