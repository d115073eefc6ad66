//! Portable binary checkpoint format for fitted forests.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic            4 bytes  "MLRF"
//! version          u16      1
//! n_features       u32
//! n_trees          u32
//! max_depth        u32      0xFFFF_FFFF = unbounded
//! min_samples_leaf u32
//! features/split   u32      0 = default
//! bootstrap        u8
//! label_min        f64
//! label_max        f64
//! per tree:
//!   n_nodes        u32
//!   per node:      u8 tag; 0 = leaf {value f64, samples u32},
//!                          1 = split {feature u32, threshold f64, left u32, right u32}
//!                  a split's children follow it and satisfy right = left + 1
//! ```

use std::io::{Read, Write};

use super::tree::Core;
use super::{Forest, ForestParams, Node, Tree};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MLRF";
pub const FORMAT_VERSION: u16 = 1;
const UNBOUNDED: u32 = u32::MAX;

fn io_err(e: std::io::Error) -> Error {
    Error::Format(e.to_string())
}

struct Reader<R>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.0.read_exact(&mut buf).map_err(io_err)?;
        Ok(buf)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))
}

impl Forest {
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&to_u32(self.n_features, "n_features")?.to_le_bytes());
        buf.extend_from_slice(&to_u32(self.trees.len(), "n_trees")?.to_le_bytes());
        let depth = match self.params.max_depth {
            Some(d) => to_u32(d, "max_depth")?,
            None => UNBOUNDED,
        };
        buf.extend_from_slice(&depth.to_le_bytes());
        buf.extend_from_slice(&to_u32(self.params.min_samples_leaf, "min_samples_leaf")?.to_le_bytes());
        let fps = to_u32(self.params.features_per_split.unwrap_or(0), "features_per_split")?;
        buf.extend_from_slice(&fps.to_le_bytes());
        buf.push(u8::from(self.params.bootstrap));
        buf.extend_from_slice(&self.label_min.to_le_bytes());
        buf.extend_from_slice(&self.label_max.to_le_bytes());
        for tree in &self.trees {
            buf.extend_from_slice(&to_u32(tree.len(), "n_nodes")?.to_le_bytes());
            for node in tree.nodes() {
                match node {
                    Node::Leaf { value, samples } => {
                        buf.push(0);
                        buf.extend_from_slice(&value.to_le_bytes());
                        buf.extend_from_slice(&to_u32(samples, "samples")?.to_le_bytes());
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        buf.push(1);
                        buf.extend_from_slice(&to_u32(feature, "feature")?.to_le_bytes());
                        buf.extend_from_slice(&threshold.to_le_bytes());
                        buf.extend_from_slice(&to_u32(left, "left")?.to_le_bytes());
                        buf.extend_from_slice(&to_u32(right, "right")?.to_le_bytes());
                    }
                }
            }
        }
        w.write_all(&buf).map_err(io_err)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(r: impl Read) -> Result<Forest> {
        let mut r = Reader(r);
        if &r.bytes::<4>()? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let n_features = r.u32()? as usize;
        let n_trees = r.u32()? as usize;
        let max_depth = match r.u32()? {
            UNBOUNDED => None,
            d => Some(d as usize),
        };
        let min_samples_leaf = r.u32()? as usize;
        let features_per_split = match r.u32()? {
            0 => None,
            k => Some(k as usize),
        };
        let bootstrap = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(Error::Format(format!("bad bootstrap flag {b}"))),
        };
        let label_min = r.f64()?;
        let label_max = r.f64()?;
        if n_trees == 0 {
            return Err(Error::Format("forest has no trees".into()));
        }
        let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
        for _ in 0..n_trees {
            let n_nodes = r.u32()? as usize;
            if n_nodes == 0 {
                return Err(Error::Format("tree has no nodes".into()));
            }
            let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
            for i in 0..n_nodes {
                let node = match r.u8()? {
                    0 => Node::Leaf {
                        value: r.f64()?,
                        samples: r.u32()? as usize,
                    },
                    1 => {
                        let feature = r.u32()? as usize;
                        let threshold = r.f64()?;
                        let left = r.u32()? as usize;
                        let right = r.u32()? as usize;
                        if left <= i {
                            return Err(Error::Format(format!("invalid split node {i}")));
                        }
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        }
                    }
                    t => return Err(Error::Format(format!("bad node tag {t}"))),
                };
                nodes.push(node);
            }
            // Children must follow their parent (no cycles) and be adjacent.
            let tree = Tree::from_nodes(&nodes, n_features)
                .ok_or_else(|| Error::Format("invalid tree structure".into()))?;
            trees.push(tree);
        }
        Ok(Forest {
            core: Core::new(&trees, n_features),
            trees,
            params: ForestParams {
                n_trees,
                max_depth,
                min_samples_leaf,
                features_per_split,
                bootstrap,
            },
            n_features,
            label_min,
            label_max,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn round_trip(seed in 0u64..10_000, n in 1usize..60, trees in 1usize..6, depth in prop::option::of(1usize..6)) {
            use rand::Rng;
            let mut rng = Seed::new(seed).rng();
            let x: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-10.0..10.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
            let params = ForestParams { n_trees: trees, max_depth: depth, ..Default::default() };
            let forest = Forest::fit_matrix(&x, 3, &y, &params, Seed::new(seed)).unwrap();
            let bytes = forest.to_bytes();
            let back = Forest::read_from(bytes.as_slice()).unwrap();
            prop_assert_eq!(&back, &forest);
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn header_is_fixed_little_endian() {
        let forest = Forest::fit_matrix(&[0.0, 1.0], 1, &[2.0, 2.0], &ForestParams { n_trees: 1, ..Default::default() }, Seed::new(1)).unwrap();
        let bytes = forest.to_bytes();
        assert_eq!(&bytes[..4], b"MLRF");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &[1, 0, 0, 0]);
        assert_eq!(&bytes[10..14], &[1, 0, 0, 0]);
        assert_eq!(&bytes[14..18], &[0xff; 4]);
        // one tree with a single leaf holding 2.0 from two rows
        let tail = &bytes[bytes.len() - 17..];
        assert_eq!(&tail[..4], &[1, 0, 0, 0]);
        assert_eq!(tail[4], 0);
        assert_eq!(f64::from_le_bytes(tail[5..13].try_into().unwrap()), 2.0);
        assert_eq!(&tail[13..], &[2, 0, 0, 0]);
    }

    #[test]
    fn rejects_corrupt_input() {
        let forest = Forest::fit_matrix(&[0.0, 1.0, 2.0], 1, &[0.0, 1.0, 5.0], &ForestParams { n_trees: 2, bootstrap: false, ..Default::default() }, Seed::new(1)).unwrap();
        let bytes = forest.to_bytes();
        assert!(Forest::read_from(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Forest::read_from(bad.as_slice()).is_err());
        let mut bad = bytes;
        bad[4] = 9;
        assert!(Forest::read_from(bad.as_slice()).is_err());
    }
}
