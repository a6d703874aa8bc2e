//! Plain-text calibration files.
//!
//! ```text
//! file    := { line }
//! line    := [ key sep value ] [ "#" comment ] newline
//! sep     := "=" | ":"
//! key     := "model" | "width" | "height" | "fx" | "fy" | "cx" | "cy"
//!          | "dist" | "dist[" index "]"
//! value   := number | "pinhole" | "fisheye" | number { ("," | " ") number }   (list only for "dist")
//! ```
//!
//! `model` defaults to `pinhole`. Pinhole distortion is `[k1, k2, p1, p2, k3]`
//! (up to 5 coefficients); fisheye is equidistant `[k1, k2, k3, k4]`. Missing
//! coefficients are zero.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Lens};

pub fn parse(text: &str, path: &Path) -> Result<CameraModel> {
    let err = |line: usize, message: String| Error::Parse { path: path.into(), line, message };
    let mut fields: HashMap<String, (usize, String)> = HashMap::new();
    let mut dist: Vec<Option<f64>> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some(pos) = line.find(['=', ':']) else {
            return Err(err(lineno, format!("expected `key = value`, got `{line}`")));
        };
        let key = line[..pos].trim().to_ascii_lowercase();
        let value = line[pos + 1..].trim();
        if key == "dist" {
            dist.clear();
            for tok in value.split([',', ' ', '\t']).filter(|t| !t.is_empty()) {
                let v = tok.parse::<f64>().map_err(|e| err(lineno, format!("dist: {e}")))?;
                dist.push(Some(v));
            }
        } else if let Some(idx) = key.strip_prefix("dist[").and_then(|k| k.strip_suffix(']')) {
            let idx: usize = idx.trim().parse().map_err(|_| err(lineno, format!("bad index in `{key}`")))?;
            let v = value.parse::<f64>().map_err(|e| err(lineno, format!("{key}: {e}")))?;
            if dist.len() <= idx {
                dist.resize(idx + 1, None);
            }
            dist[idx] = Some(v);
        } else {
            fields.insert(key, (lineno, value.to_string()));
        }
    }

    let num = |key: &str| -> Result<f64> {
        let (line, v) = fields.get(key).ok_or_else(|| err(0, format!("missing field `{key}`")))?;
        v.parse::<f64>().map_err(|e| err(*line, format!("{key}: {e}")))
    };
    let size = |key: &str| -> Result<usize> {
        let (line, v) = fields.get(key).ok_or_else(|| err(0, format!("missing field `{key}`")))?;
        v.parse::<usize>().map_err(|e| err(*line, format!("{key}: {e}")))
    };

    let model = fields.get("model").map(|(_, v)| v.to_ascii_lowercase()).unwrap_or_else(|| "pinhole".into());
    let coeffs: Vec<f64> = dist.iter().map(|c| c.unwrap_or(0.0)).collect();
    let lens = match model.as_str() {
        "pinhole" => {
            if coeffs.len() > 5 {
                return Err(err(0, format!("pinhole takes at most 5 distortion coefficients, got {}", coeffs.len())));
            }
            let mut d = [0.0; 5];
            d[..coeffs.len()].copy_from_slice(&coeffs);
            Lens::Pinhole { dist: d }
        }
        "fisheye" => {
            if coeffs.len() > 4 {
                return Err(err(0, format!("fisheye takes at most 4 distortion coefficients, got {}", coeffs.len())));
            }
            let mut d = [0.0; 4];
            d[..coeffs.len()].copy_from_slice(&coeffs);
            Lens::Fisheye { dist: d }
        }
        other => return Err(err(fields["model"].0, format!("unknown model `{other}`"))),
    };

    CameraModel::new(lens, num("fx")?, num("fy")?, num("cx")?, num("cy")?, size("width")?, size("height")?)
}

pub fn to_string(cam: &CameraModel) -> String {
    let (model, dist): (&str, Vec<f64>) = match cam.lens {
        Lens::Pinhole { dist } => ("pinhole", dist.to_vec()),
        Lens::Fisheye { dist } => ("fisheye", dist.to_vec()),
    };
    let dist: Vec<String> = dist.iter().map(|d| d.to_string()).collect();
    format!(
        "model = {model}\nwidth = {}\nheight = {}\nfx = {}\nfy = {}\ncx = {}\ncy = {}\ndist = {}\n",
        cam.width,
        cam.height,
        cam.fx,
        cam.fy,
        cam.cx,
        cam.cy,
        dist.join(" ")
    )
}
