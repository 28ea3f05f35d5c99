//! Forest blob encoding (embedded in bundles) and node-table export.

use std::path::Path;

use super::tree::{DecisionTree, Node};
use super::{FeatureRecipe, ForestBranch, ForestConfig, ForestError};
use crate::ioutil::{self, ByteReader};

const MAGIC: &[u8; 4] = b"CVRF";
const VERSION: u16 = 1;

/// Encodes a trained forest to its byte layout.
pub fn forest_to_bytes(f: &ForestBranch) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    ioutil::put_u16(&mut buf, VERSION);
    buf.push(f.tap_index as u8);
    ioutil::put_u16(&mut buf, f.n_classes as u16);
    ioutil::put_u32(&mut buf, f.n_features as u32);
    ioutil::put_u32(&mut buf, f.feature_recipe.channels as u32);
    ioutil::put_u32(&mut buf, f.feature_recipe.height as u32);
    ioutil::put_u32(&mut buf, f.feature_recipe.width as u32);
    ioutil::put_u32(&mut buf, f.config.n_trees as u32);
    ioutil::put_u32(&mut buf, f.config.max_depth as u32);
    ioutil::put_u32(&mut buf, f.config.min_leaf as u32);
    ioutil::put_u32(&mut buf, f.config.features_per_node.map(|v| v as u32).unwrap_or(0));
    ioutil::put_u64(&mut buf, f.config.seed);
    ioutil::put_f64(&mut buf, f.oob_accuracy.unwrap_or(f64::NAN));
    ioutil::put_u32(&mut buf, f.trees.len() as u32);
    for tree in &f.trees {
        ioutil::put_u32(&mut buf, tree.nodes.len() as u32);
        for node in &tree.nodes {
            match node {
                Node::Internal { feature, threshold, left, right } => {
                    buf.push(0);
                    ioutil::put_u32(&mut buf, *feature as u32);
                    ioutil::put_f64(&mut buf, *threshold);
                    ioutil::put_u32(&mut buf, *left as u32);
                    ioutil::put_u32(&mut buf, *right as u32);
                }
                Node::Leaf { class_counts } => {
                    buf.push(1);
                    for &c in class_counts {
                        ioutil::put_u32(&mut buf, c);
                    }
                }
            }
        }
    }
    buf
}

/// Decodes a forest encoded by [`forest_to_bytes`].
pub fn forest_from_bytes(bytes: &[u8]) -> Result<ForestBranch, ForestError> {
    let mut r = ByteReader::new(bytes);
    if r.take(4).ok_or(ForestError::Truncated("magic"))? != MAGIC {
        return Err(ForestError::BadMagic);
    }
    let version = r.u16().ok_or(ForestError::Truncated("version"))?;
    if version != VERSION {
        return Err(ForestError::VersionMismatch { found: version, expected: VERSION });
    }
    let tap_index = r.u8().ok_or(ForestError::Truncated("tap index"))? as usize;
    let n_classes = r.u16().ok_or(ForestError::Truncated("n_classes"))? as usize;
    let n_features = r.u32().ok_or(ForestError::Truncated("n_features"))? as usize;
    let channels = r.u32().ok_or(ForestError::Truncated("recipe"))? as usize;
    let height = r.u32().ok_or(ForestError::Truncated("recipe"))? as usize;
    let width = r.u32().ok_or(ForestError::Truncated("recipe"))? as usize;
    let n_trees_cfg = r.u32().ok_or(ForestError::Truncated("config"))? as usize;
    let max_depth = r.u32().ok_or(ForestError::Truncated("config"))? as usize;
    let min_leaf = r.u32().ok_or(ForestError::Truncated("config"))? as usize;
    let fpn = r.u32().ok_or(ForestError::Truncated("config"))?;
    let seed = r.u64().ok_or(ForestError::Truncated("config"))?;
    let oob = r.f64().ok_or(ForestError::Truncated("oob"))?;
    let n_trees = r.u32().ok_or(ForestError::Truncated("tree count"))? as usize;
    if n_classes == 0 {
        return Err(ForestError::BadParam("zero classes in blob".into()));
    }
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let n_nodes = r.u32().ok_or(ForestError::Truncated("node count"))? as usize;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            match r.u8().ok_or(ForestError::Truncated("node kind"))? {
                0 => {
                    let feature = r.u32().ok_or(ForestError::Truncated("node"))? as usize;
                    let threshold = r.f64().ok_or(ForestError::Truncated("node"))?;
                    let left = r.u32().ok_or(ForestError::Truncated("node"))? as usize;
                    let right = r.u32().ok_or(ForestError::Truncated("node"))? as usize;
                    if left >= n_nodes || right >= n_nodes || feature >= n_features {
                        return Err(ForestError::BadParam("node reference out of range".into()));
                    }
                    nodes.push(Node::Internal { feature, threshold, left, right });
                }
                1 => {
                    let mut class_counts = Vec::with_capacity(n_classes);
                    for _ in 0..n_classes {
                        class_counts.push(r.u32().ok_or(ForestError::Truncated("leaf"))?);
                    }
                    nodes.push(Node::Leaf { class_counts });
                }
                k => return Err(ForestError::BadParam(format!("unknown node kind {k}"))),
            }
        }
        trees.push(DecisionTree { nodes, n_classes });
    }
    Ok(ForestBranch {
        trees,
        n_classes,
        n_features,
        config: ForestConfig {
            n_trees: n_trees_cfg,
            max_depth,
            min_leaf,
            features_per_node: (fpn > 0).then_some(fpn as usize),
            seed,
        },
        tap_index,
        feature_recipe: FeatureRecipe { channels, height, width },
        oob_accuracy: if oob.is_nan() { None } else { Some(oob) },
    })
}

impl ForestBranch {
    /// Exports the forest as a flat node table (CSV) for inspection.
    pub fn export_node_table(&self, path: &Path) -> Result<(), ForestError> {
        let mut out = String::from("tree,node,kind,feature,threshold,left,right,class_counts\n");
        for (ti, tree) in self.trees.iter().enumerate() {
            for (ni, node) in tree.nodes.iter().enumerate() {
                match node {
                    Node::Internal { feature, threshold, left, right } => {
                        out.push_str(&format!(
                            "{ti},{ni},internal,{feature},{threshold},{left},{right},\n"
                        ));
                    }
                    Node::Leaf { class_counts } => {
                        let counts = class_counts
                            .iter()
                            .map(|c| c.to_string())
                            .collect::<Vec<_>>()
                            .join("|");
                        out.push_str(&format!("{ti},{ni},leaf,,,,,{counts}\n"));
                    }
                }
            }
        }
        ioutil::write_atomic(path, out.as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{fit_forest, FeatureMatrix};
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trained() -> ForestBranch {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3usize {
            for _ in 0..30 {
                data.push(c as f64 * 3.0 + rng.random_range(-1.0..1.0));
                data.push(rng.random_range(-1.0..1.0));
                labels.push(c);
            }
        }
        let x = FeatureMatrix::new(data, 2);
        let cfg = ForestConfig { n_trees: 9, max_depth: 5, seed: 2, ..Default::default() };
        fit_forest(&x, &labels, 3, &cfg, 2, FeatureRecipe { channels: 4, height: 2, width: 2 })
            .unwrap()
    }

    #[test]
    fn roundtrip_identity() {
        let f = trained();
        let bytes = forest_to_bytes(&f);
        let back = forest_from_bytes(&bytes).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn corrupted_blob_is_typed_error() {
        let f = trained();
        let mut bytes = forest_to_bytes(&f);
        bytes[0] = b'Z';
        assert!(matches!(forest_from_bytes(&bytes), Err(ForestError::BadMagic)));
        let bytes = forest_to_bytes(&f);
        assert!(matches!(
            forest_from_bytes(&bytes[..bytes.len() - 3]),
            Err(ForestError::Truncated(_))
        ));
    }

    #[test]
    fn node_table_row_per_node() {
        let f = trained();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nodes.csv");
        f.export_node_table(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let rows = text.lines().count() - 1;
        let nodes: usize = f.trees.iter().map(|t| t.nodes.len()).sum();
        assert_eq!(rows, nodes);
    }
}
