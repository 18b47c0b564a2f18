//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each exported function returns a JSON string; the plain-Rust versions in
//! [`demo`] return `serde_json::Value` so they can be tested natively.

use wasm_bindgen::prelude::*;

pub mod demo;

fn to_js(r: Result<serde_json::Value, String>) -> Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

/// Draws a 2-D candidate pool around three class centroids and runs one
/// selection scheme over it.
#[wasm_bindgen]
pub fn selection_playground(seed: u64, scheme: &str, k: usize, pool: usize) -> Result<String, JsValue> {
    to_js(demo::selection_playground(seed, scheme, k, pool))
}

/// Trains a small GAN on a two-class mixture and returns per-epoch losses.
#[wasm_bindgen]
pub fn gan_losses(seed: u64, epochs: usize, loss: &str) -> Result<String, JsValue> {
    to_js(demo::gan_losses(seed, epochs, loss))
}

/// Runs one scenario on a six-class mixture split into three tasks.
#[wasm_bindgen]
pub fn continual_run(seed: u64, scenario: &str) -> Result<String, JsValue> {
    to_js(demo::continual_run(seed, scenario))
}
