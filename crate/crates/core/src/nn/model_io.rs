//! Model container: `XAISEG01` magic, a JSON manifest, then a blob of
//! little-endian `f32` parameters (weight then bias per layer, row-major).
//!
//! ```text
//! [8]  magic "XAISEG01"
//! [4]  manifest length in bytes (u32 LE)
//! [n]  manifest (UTF-8 JSON)
//! [..] parameter blob
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::LayerSpec;
use super::network::{Network, Params};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"XAISEG01";
pub const FORMAT_VERSION: u32 = 1;

/// Upper bound on any single dimension or layer hyper-parameter accepted from a file.
const MAX_DIM: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerEntry>,
    pub blob_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub spec: LayerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_shape: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_shape: Option<Vec<usize>>,
    /// Byte offsets into the blob.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_offset: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_offset: Option<usize>,
}

pub fn encode_model(net: &Network) -> Vec<u8> {
    let mut blob = Vec::with_capacity(net.parameter_count() * 4);
    let mut layers = Vec::with_capacity(net.layers().len());
    for (spec, p) in net.layers().iter().zip(net.params()) {
        let mut entry = LayerEntry {
            spec: spec.clone(),
            weight_shape: None,
            bias_shape: None,
            weight_offset: None,
            bias_offset: None,
        };
        if let Some(p) = p {
            entry.weight_shape = Some(p.weight.shape().to_vec());
            entry.weight_offset = Some(blob.len());
            blob.extend(p.weight.data().iter().flat_map(|v| v.to_le_bytes()));
            entry.bias_shape = Some(p.bias.shape().to_vec());
            entry.bias_offset = Some(blob.len());
            blob.extend(p.bias.data().iter().flat_map(|v| v.to_le_bytes()));
        }
        layers.push(entry);
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        input_shape: net.input_shape().to_vec(),
        layers,
        blob_bytes: blob.len(),
    };
    let text = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(12 + text.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(&text);
    out.extend_from_slice(&blob);
    out
}

fn integrity(msg: impl Into<String>) -> Error {
    Error::Integrity(msg.into())
}

fn check_dims(what: &str, dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.iter().any(|&d| d == 0 || d > MAX_DIM) {
        return Err(integrity(format!("{what} has out-of-range dimensions {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| integrity(format!("{what} is too large")))
}

fn check_spec(spec: &LayerSpec) -> Result<()> {
    let values: Vec<usize> = match *spec {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => vec![in_channels, out_channels, kernel, stride, padding + 1],
        LayerSpec::MaxPool2d { window, stride } => vec![window, stride],
        LayerSpec::Linear {
            in_features,
            out_features,
        } => vec![in_features, out_features],
        LayerSpec::Upsample2d { factor } => vec![factor],
        _ => vec![],
    };
    if values.iter().any(|&v| v > MAX_DIM) {
        return Err(integrity(format!("layer parameters out of range: {spec:?}")));
    }
    Ok(())
}

fn read_floats(blob: &[u8], offset: usize, count: usize) -> Result<Vec<f32>> {
    let end = count
        .checked_mul(4)
        .and_then(|n| n.checked_add(offset))
        .ok_or_else(|| integrity("parameter range overflows"))?;
    if end > blob.len() {
        return Err(integrity(format!(
            "parameter range {offset}..{end} exceeds blob of {} bytes",
            blob.len()
        )));
    }
    Ok(blob[offset..end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Parses a model container. Never panics on malformed input.
pub fn decode_model(bytes: &[u8]) -> Result<Network> {
    if bytes.len() < 12 {
        return Err(Error::Truncated {
            needed: 12,
            found: bytes.len(),
        });
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let manifest_len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    let manifest_end = 12usize
        .checked_add(manifest_len)
        .ok_or_else(|| integrity("manifest length overflows"))?;
    if bytes.len() < manifest_end {
        return Err(Error::Truncated {
            needed: manifest_end,
            found: bytes.len(),
        });
    }
    let manifest: Manifest =
        serde_json::from_slice(&bytes[12..manifest_end]).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let blob = &bytes[manifest_end..];
    if blob.len() < manifest.blob_bytes {
        return Err(Error::Truncated {
            needed: manifest_end + manifest.blob_bytes,
            found: bytes.len(),
        });
    }
    if blob.len() != manifest.blob_bytes {
        return Err(integrity(format!(
            "blob holds {} bytes but manifest declares {}",
            blob.len(),
            manifest.blob_bytes
        )));
    }
    check_dims("input shape", &manifest.input_shape)?;

    let mut specs = Vec::with_capacity(manifest.layers.len());
    let mut params = Vec::with_capacity(manifest.layers.len());
    let mut cursor = 0usize;
    for (i, entry) in manifest.layers.iter().enumerate() {
        check_spec(&entry.spec)?;
        let expected = entry.spec.param_shapes();
        match (
            expected,
            &entry.weight_shape,
            &entry.bias_shape,
            entry.weight_offset,
            entry.bias_offset,
        ) {
            (None, None, None, None, None) => params.push(None),
            (Some((ws, bs)), Some(w_shape), Some(b_shape), Some(w_off), Some(b_off)) => {
                if &ws != w_shape || &bs != b_shape {
                    return Err(integrity(format!("layer {i}: parameter shapes disagree with spec")));
                }
                let wn = check_dims("weight", w_shape)?;
                let bn = check_dims("bias", b_shape)?;
                if w_off != cursor || b_off != cursor + wn * 4 {
                    return Err(integrity(format!("layer {i}: non-contiguous parameter offsets")));
                }
                let weight = read_floats(blob, w_off, wn)?;
                let bias = read_floats(blob, b_off, bn)?;
                cursor = b_off + bn * 4;
                params.push(Some(Params {
                    weight: Tensor::new(w_shape.clone(), weight)?,
                    bias: Tensor::new(b_shape.clone(), bias)?,
                }));
            }
            _ => return Err(integrity(format!("layer {i}: inconsistent parameter entries"))),
        }
        specs.push(entry.spec.clone());
    }
    if cursor != blob.len() {
        return Err(integrity(format!(
            "layers account for {cursor} bytes but blob holds {}",
            blob.len()
        )));
    }
    Network::from_parts(&manifest.input_shape, specs, params).map_err(|e| match e {
        Error::Shape { .. } | Error::InvalidArgument(_) | Error::Empty(_) => integrity(format!("manifest: {e}")),
        other => other,
    })
}

pub fn save_model(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(net))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    decode_model(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::{mini_vgg, random_tensor};

    #[test]
    fn round_trip_is_bitwise() {
        let net = mini_vgg(&[1, 16, 16], 2, 11).unwrap();
        let back = decode_model(&encode_model(&net)).unwrap();
        assert_eq!(back, net);
        for s in 0..10 {
            let x = random_tensor(&[1, 16, 16], 0.0, 1.0, s);
            let a = net.forward(&x).unwrap();
            let b = back.forward(&x).unwrap();
            assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = encode_model(&mini_vgg(&[1, 8, 8], 2, 1).unwrap());
        bytes[0] = b'Y';
        assert!(matches!(decode_model(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn blob_size_mismatch() {
        let net = mini_vgg(&[1, 8, 8], 2, 1).unwrap();
        let mut bytes = encode_model(&net);
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        assert!(matches!(decode_model(&bytes), Err(Error::Integrity(_))));
        let bytes = encode_model(&net);
        assert!(matches!(
            decode_model(&bytes[..bytes.len() - 4]),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn manifest_layer_count_mismatch() {
        let net = mini_vgg(&[1, 8, 8], 2, 1).unwrap();
        let bytes = encode_model(&net);
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let mut manifest: Manifest = serde_json::from_slice(&bytes[12..12 + len]).unwrap();
        manifest.layers.pop();
        let text = serde_json::to_vec(&manifest).unwrap();
        let mut out = MAGIC.to_vec();
        out.extend((text.len() as u32).to_le_bytes());
        out.extend(text);
        out.extend(&bytes[12 + len..]);
        assert!(matches!(decode_model(&out), Err(Error::Integrity(_))));
    }

    #[test]
    fn version_mismatch() {
        let net = mini_vgg(&[1, 8, 8], 2, 1).unwrap();
        let bytes = encode_model(&net);
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let text = String::from_utf8(bytes[12..12 + len].to_vec()).unwrap();
        let text = text.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
        let mut out = MAGIC.to_vec();
        out.extend((text.len() as u32).to_le_bytes());
        out.extend(text.as_bytes());
        out.extend(&bytes[12 + len..]);
        assert!(matches!(decode_model(&out), Err(Error::Version { found: 2, .. })));
    }
}
