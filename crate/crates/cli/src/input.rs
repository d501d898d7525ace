//! Reading series and models from disk.

use std::fs;
use std::path::Path;

use mgnd::MgndModel;

/// Parses single-column numeric data separated by commas or newlines.
///
/// The first non-blank line is skipped as a header when it is not numeric.
/// Blank lines are ignored; any other non-numeric token is an error.
pub fn parse_series(text: &str) -> Result<Vec<f64>, String> {
    let mut values = Vec::new();
    let mut seen_first = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: Result<Vec<f64>, String> = line
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| format!("line {}: '{tok}' is not a finite number", lineno + 1))
            })
            .collect();
        match parsed {
            Ok(v) => values.extend(v),
            Err(_) if !seen_first && !line.contains(',') => {}
            Err(e) => return Err(e),
        }
        seen_first = true;
    }
    if values.is_empty() {
        return Err("no numeric values found".into());
    }
    Ok(values)
}

pub fn read_series(path: &Path) -> Result<Vec<f64>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_series(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Accepts a bare model (`{"components": [...]}`) or a fit result holding
/// one under `"model"`.
pub fn read_model(path: &Path) -> Result<MgndModel, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("{}: invalid JSON: {e}", path.display()))?;
    if let Some(model) = value.get_mut("model") {
        value = model.take();
    }
    serde_json::from_value(value).map_err(|e| format!("{}: invalid model: {e}", path.display()))
}
