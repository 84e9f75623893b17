//! Object store persisted under a root directory.
//!
//! Layout:
//!
//! ```text
//! <root>/manifest.tsv                               bucket and object index
//! <root>/<bucket>/<space_id>/<object_id>.tcol       single-shard object
//! <root>/<bucket>/<space_id>/<object_id>-<k>.tcol   shard k of a sharded object
//! <root>/_meta/<space_id>/<object_id>.tmeta         schema, stats and shard ranges
//! ```
//!
//! `manifest.tsv` starts with `# tierquery manifest 1` and holds one record
//! per line, tab separated:
//!
//! ```text
//! bucket  <name>    <space_id>  <home_node>  <shards>
//! object  <bucket>  <key>       <object_id>  <rows>
//! ```
//!
//! Shard `k` of a bucket lives on array node `(home_node + k) % array_nodes`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use crate::columnar::framing::{put_f64, put_str, put_u32, put_u64, FrameReader, FrameWriter, PayloadReader};
use crate::columnar::{
    decode_schema, deserialize_columnar, encode_schema, serialize_columnar, ColumnData, Schema, Table,
};
use crate::executor::Segment;
use crate::stats::{decode_histogram, encode_histogram, TableStats, DEFAULT_BINS};

use super::ClusterError;

const MANIFEST: &str = "manifest.tsv";
const MANIFEST_HEADER: &str = "# tierquery manifest 1";
const META_MAGIC: &[u8; 4] = b"TMET";
const META_SCHEMA: u8 = 0x01;
const META_SUMMARY: u8 = 0x10;
const META_HISTOGRAM: u8 = 0x11;
const META_SHARD: u8 = 0x12;

/// Bucket and key of a stored object.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObjectRef {
    pub bucket: String,
    pub key: String,
}

impl ObjectRef {
    pub fn new(bucket: impl Into<String>, key: impl Into<String>) -> Self {
        ObjectRef {
            bucket: bucket.into(),
            key: key.into(),
        }
    }

    /// Parses `bucket/key`; the key may itself contain slashes.
    pub fn parse(s: &str) -> Option<ObjectRef> {
        let (b, k) = s.split_once('/')?;
        (!b.is_empty() && !k.is_empty()).then(|| ObjectRef::new(b, k))
    }
}

impl std::fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.bucket, self.key)
    }
}

/// Min and max of the non-null values of a numeric column within one shard.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRange {
    pub column: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShardInfo {
    pub index: usize,
    pub rows: u64,
    pub rowid_base: i64,
    pub stored_bytes: u64,
    /// Columns with at least one non-null value.
    pub ranges: Vec<ColumnRange>,
}

impl ShardInfo {
    pub fn range(&self, column: &str) -> Option<&ColumnRange> {
        self.ranges.iter().find(|r| r.column == column)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMeta {
    pub key: String,
    pub object_id: u64,
    pub schema: Schema,
    pub row_count: u64,
    pub logical_bytes: u64,
    pub stats: TableStats,
    pub shards: Vec<ShardInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketInfo {
    pub name: String,
    pub space_id: u32,
    pub home_node: usize,
    pub shards: usize,
    pub objects: BTreeMap<String, Arc<ObjectMeta>>,
}

impl BucketInfo {
    /// Array node holding shard `k` in a cluster of `array_nodes` nodes.
    pub fn node_of(&self, shard: usize, array_nodes: usize) -> usize {
        (self.home_node + shard) % array_nodes.max(1)
    }
}

#[derive(Debug, Default)]
struct ObjectMap {
    buckets: BTreeMap<String, BucketInfo>,
}

#[derive(Debug)]
pub struct ObjectStore {
    root: PathBuf,
    map: RwLock<ObjectMap>,
}

fn io_err(path: &Path, e: std::io::Error) -> ClusterError {
    ClusterError::Io(format!("{}: {e}", path.display()))
}

fn valid_bucket_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('_')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && name != "."
        && name != ".."
}

impl ObjectStore {
    /// Opens the store at `root`, creating an empty one if needed.
    pub fn open(root: impl Into<PathBuf>) -> Result<ObjectStore, ClusterError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
        let mut map = ObjectMap::default();
        let manifest = root.join(MANIFEST);
        if manifest.exists() {
            let text = fs::read_to_string(&manifest).map_err(|e| io_err(&manifest, e))?;
            let mut objects = Vec::new();
            for (n, line) in text.lines().enumerate() {
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let bad = || ClusterError::Corrupt(format!("manifest line {}: `{line}`", n + 1));
                let parts: Vec<&str> = line.split('\t').collect();
                match parts.as_slice() {
                    ["bucket", name, space, home, shards] => {
                        let info = BucketInfo {
                            name: name.to_string(),
                            space_id: space.parse().map_err(|_| bad())?,
                            home_node: home.parse().map_err(|_| bad())?,
                            shards: shards.parse().map_err(|_| bad())?,
                            objects: BTreeMap::new(),
                        };
                        map.buckets.insert(name.to_string(), info);
                    }
                    ["object", bucket, key, id, _rows] => {
                        objects.push((
                            bucket.to_string(),
                            key.to_string(),
                            id.parse::<u64>().map_err(|_| bad())?,
                        ));
                    }
                    _ => return Err(bad()),
                }
            }
            for (bucket, key, id) in objects {
                let info = map
                    .buckets
                    .get_mut(&bucket)
                    .ok_or_else(|| ClusterError::Corrupt(format!("object `{key}` in unknown bucket `{bucket}`")))?;
                let path = meta_path(&root, info.space_id, id);
                let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
                let meta = decode_meta(&bytes)?;
                if meta.key != key {
                    return Err(ClusterError::Corrupt(format!(
                        "{} holds key `{}`",
                        path.display(),
                        meta.key
                    )));
                }
                info.objects.insert(key, Arc::new(meta));
            }
        }
        Ok(ObjectStore {
            root,
            map: RwLock::new(map),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn create_bucket(&self, name: &str, shards: usize) -> Result<BucketInfo, ClusterError> {
        if !valid_bucket_name(name) {
            return Err(ClusterError::InvalidName(name.to_string()));
        }
        if shards == 0 {
            return Err(ClusterError::InvalidConfig("a bucket needs at least one shard".into()));
        }
        let mut map = self.map.write().expect("object map lock");
        if map.buckets.contains_key(name) {
            return Err(ClusterError::BucketExists(name.to_string()));
        }
        let space_id = map.buckets.values().map(|b| b.space_id).max().unwrap_or(0) + 1;
        let info = BucketInfo {
            name: name.to_string(),
            space_id,
            home_node: (space_id - 1) as usize,
            shards,
            objects: BTreeMap::new(),
        };
        let dir = self.root.join(name).join(space_id.to_string());
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        map.buckets.insert(name.to_string(), info.clone());
        self.write_manifest(&map)?;
        Ok(info)
    }

    pub fn bucket(&self, name: &str) -> Result<BucketInfo, ClusterError> {
        let map = self.map.read().expect("object map lock");
        map.buckets
            .get(name)
            .cloned()
            .ok_or_else(|| ClusterError::NoSuchBucket(name.to_string()))
    }

    pub fn buckets(&self) -> Vec<BucketInfo> {
        self.map
            .read()
            .expect("object map lock")
            .buckets
            .values()
            .cloned()
            .collect()
    }

    /// Stores `table`, sharding it contiguously over the bucket's shards and
    /// sampling histograms for every numeric scalar column at `stats_rate`.
    pub fn put_object(
        &self,
        bucket: &str,
        key: &str,
        table: &Table,
        stats_rate: f64,
    ) -> Result<Arc<ObjectMeta>, ClusterError> {
        if key.is_empty() || key.contains(['\t', '\n', '\r']) {
            return Err(ClusterError::InvalidName(key.to_string()));
        }
        if table.schema().is_empty() {
            return Err(ClusterError::InvalidConfig(
                "an object needs at least one column".into(),
            ));
        }
        let stats = TableStats::build(table, stats_rate, DEFAULT_BINS)?;
        let mut map = self.map.write().expect("object map lock");
        let info = map
            .buckets
            .get_mut(bucket)
            .ok_or_else(|| ClusterError::NoSuchBucket(bucket.to_string()))?;
        if info.objects.contains_key(key) {
            return Err(ClusterError::DuplicateKey {
                bucket: bucket.to_string(),
                key: key.to_string(),
            });
        }
        let object_id = info.objects.values().map(|o| o.object_id).max().unwrap_or(0) + 1;
        let rows = table.num_rows();
        let mut shards = Vec::with_capacity(info.shards);
        let mut start = 0;
        for k in 0..info.shards {
            let n = rows / info.shards + usize::from(k < rows % info.shards);
            let piece = table.slice(start, n);
            let bytes = serialize_columnar(&piece);
            let path = shard_path(&self.root, info, object_id, k);
            fs::write(&path, &bytes).map_err(|e| io_err(&path, e))?;
            shards.push(ShardInfo {
                index: k,
                rows: n as u64,
                rowid_base: start as i64,
                stored_bytes: bytes.len() as u64,
                ranges: column_ranges(&piece),
            });
            start += n;
        }
        let meta = ObjectMeta {
            key: key.to_string(),
            object_id,
            schema: table.schema().as_ref().clone(),
            row_count: rows as u64,
            logical_bytes: table.logical_bytes(),
            stats,
            shards,
        };
        let path = meta_path(&self.root, info.space_id, object_id);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        fs::write(&path, encode_meta(&meta)).map_err(|e| io_err(&path, e))?;
        let meta = Arc::new(meta);
        info.objects.insert(key.to_string(), meta.clone());
        self.write_manifest(&map)?;
        Ok(meta)
    }

    pub fn object_meta(&self, obj: &ObjectRef) -> Result<Arc<ObjectMeta>, ClusterError> {
        let map = self.map.read().expect("object map lock");
        let info = map
            .buckets
            .get(&obj.bucket)
            .ok_or_else(|| ClusterError::NoSuchBucket(obj.bucket.clone()))?;
        info.objects
            .get(&obj.key)
            .cloned()
            .ok_or_else(|| ClusterError::NoSuchKey(obj.to_string()))
    }

    /// Raw TIERCOL bytes of every shard, in shard order.
    pub fn shard_bytes(&self, obj: &ObjectRef) -> Result<Vec<Vec<u8>>, ClusterError> {
        let meta = self.object_meta(obj)?;
        let info = self.bucket(&obj.bucket)?;
        (0..meta.shards.len())
            .map(|k| {
                let path = shard_path(&self.root, &info, meta.object_id, k);
                fs::read(&path).map_err(|e| io_err(&path, e))
            })
            .collect()
    }

    /// Shards as executor segments carrying their global rowid offsets.
    pub fn segments(&self, obj: &ObjectRef) -> Result<Vec<Segment>, ClusterError> {
        let meta = self.object_meta(obj)?;
        self.shard_bytes(obj)?
            .iter()
            .zip(&meta.shards)
            .map(|(bytes, s)| {
                Ok(Segment {
                    table: Arc::new(deserialize_columnar(bytes)?),
                    rowid_base: s.rowid_base,
                })
            })
            .collect()
    }

    pub fn get_object(&self, obj: &ObjectRef) -> Result<Table, ClusterError> {
        let meta = self.object_meta(obj)?;
        let parts: Vec<Table> = self
            .segments(obj)?
            .into_iter()
            .map(|s| Arc::unwrap_or_clone(s.table))
            .collect();
        Ok(Table::concat(Arc::new(meta.schema.clone()), &parts)?)
    }

    fn write_manifest(&self, map: &ObjectMap) -> Result<(), ClusterError> {
        let mut text = format!("{MANIFEST_HEADER}\n");
        for b in map.buckets.values() {
            text.push_str(&format!(
                "bucket\t{}\t{}\t{}\t{}\n",
                b.name, b.space_id, b.home_node, b.shards
            ));
        }
        for b in map.buckets.values() {
            for o in b.objects.values() {
                text.push_str(&format!(
                    "object\t{}\t{}\t{}\t{}\n",
                    b.name, o.key, o.object_id, o.row_count
                ));
            }
        }
        let tmp = self.root.join(format!("{MANIFEST}.tmp"));
        fs::write(&tmp, text).map_err(|e| io_err(&tmp, e))?;
        let dst = self.root.join(MANIFEST);
        fs::rename(&tmp, &dst).map_err(|e| io_err(&dst, e))
    }
}

fn shard_path(root: &Path, info: &BucketInfo, object_id: u64, shard: usize) -> PathBuf {
    let file = if info.shards == 1 {
        format!("{object_id}.tcol")
    } else {
        format!("{object_id}-{shard}.tcol")
    };
    root.join(&info.name).join(info.space_id.to_string()).join(file)
}

fn meta_path(root: &Path, space_id: u32, object_id: u64) -> PathBuf {
    root.join("_meta")
        .join(space_id.to_string())
        .join(format!("{object_id}.tmeta"))
}

fn column_ranges(table: &Table) -> Vec<ColumnRange> {
    let mut out = Vec::new();
    for (i, f) in table.schema().fields().iter().enumerate() {
        if !f.data_type.is_numeric() {
            continue;
        }
        let mut range: Option<(f64, f64)> = None;
        for b in table.batches() {
            let col = b.column(i);
            for r in 0..col.len() {
                if !col.is_valid(r) {
                    continue;
                }
                let v = match col.data() {
                    ColumnData::Int32(v) => v[r] as f64,
                    ColumnData::Int64(v) => v[r] as f64,
                    ColumnData::Float64(v) => v[r],
                    _ => continue,
                };
                if v.is_nan() {
                    continue;
                }
                range = Some(range.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v))));
            }
        }
        if let Some((min, max)) = range {
            out.push(ColumnRange {
                column: f.name.clone(),
                min,
                max,
            });
        }
    }
    out
}

fn encode_meta(meta: &ObjectMeta) -> Vec<u8> {
    let mut w = FrameWriter::new(META_MAGIC, 1, 0);
    w.frame(META_SCHEMA, &encode_schema(&meta.schema));
    let mut p = Vec::new();
    put_str(&mut p, &meta.key);
    put_u64(&mut p, meta.object_id);
    put_u64(&mut p, meta.row_count);
    put_u64(&mut p, meta.logical_bytes);
    put_u64(&mut p, meta.stats.total_rows);
    put_u32(&mut p, meta.stats.column_bytes.len() as u32);
    for (name, bytes) in &meta.stats.column_bytes {
        put_str(&mut p, name);
        put_u64(&mut p, *bytes);
    }
    w.frame(META_SUMMARY, &p);
    for h in &meta.stats.histograms {
        let mut p = Vec::new();
        encode_histogram(h, &mut p);
        w.frame(META_HISTOGRAM, &p);
    }
    for s in &meta.shards {
        let mut p = Vec::new();
        put_u64(&mut p, s.index as u64);
        put_u64(&mut p, s.rows);
        put_u64(&mut p, s.rowid_base as u64);
        put_u64(&mut p, s.stored_bytes);
        put_u32(&mut p, s.ranges.len() as u32);
        for r in &s.ranges {
            put_str(&mut p, &r.column);
            put_f64(&mut p, r.min);
            put_f64(&mut p, r.max);
        }
        w.frame(META_SHARD, &p);
    }
    w.finish()
}

fn decode_meta(bytes: &[u8]) -> Result<ObjectMeta, ClusterError> {
    let mut r = FrameReader::open(bytes, META_MAGIC)?;
    let mut schema = None;
    let mut summary = None;
    let mut histograms = Vec::new();
    let mut shards = Vec::new();
    while let Some((ty, payload)) = r.next_frame()? {
        let mut p = PayloadReader::new(payload);
        match ty {
            META_SCHEMA => schema = Some(decode_schema(payload)?),
            META_SUMMARY => {
                let key = p.string()?;
                let object_id = p.u64()?;
                let row_count = p.u64()?;
                let logical_bytes = p.u64()?;
                let total_rows = p.u64()?;
                let n = p.u32()? as usize;
                let mut column_bytes = Vec::with_capacity(n.min(4096));
                for _ in 0..n {
                    column_bytes.push((p.string()?, p.u64()?));
                }
                p.finish()?;
                summary = Some((key, object_id, row_count, logical_bytes, total_rows, column_bytes));
            }
            META_HISTOGRAM => {
                histograms.push(decode_histogram(&mut p)?);
                p.finish()?;
            }
            META_SHARD => {
                let index = p.u64()? as usize;
                let rows = p.u64()?;
                let rowid_base = p.u64()? as i64;
                let stored_bytes = p.u64()?;
                let n = p.u32()? as usize;
                let mut ranges = Vec::with_capacity(n.min(4096));
                for _ in 0..n {
                    ranges.push(ColumnRange {
                        column: p.string()?,
                        min: p.f64()?,
                        max: p.f64()?,
                    });
                }
                p.finish()?;
                shards.push(ShardInfo {
                    index,
                    rows,
                    rowid_base,
                    stored_bytes,
                    ranges,
                });
            }
            other => return Err(ClusterError::Corrupt(format!("unknown metadata frame {other:#04x}"))),
        }
    }
    let (Some(schema), Some((key, object_id, row_count, logical_bytes, total_rows, column_bytes))) = (schema, summary)
    else {
        return Err(ClusterError::Corrupt(
            "metadata is missing its schema or summary".into(),
        ));
    };
    Ok(ObjectMeta {
        key,
        object_id,
        schema,
        row_count,
        logical_bytes,
        stats: TableStats {
            total_rows,
            histograms,
            column_bytes,
        },
        shards,
    })
}
