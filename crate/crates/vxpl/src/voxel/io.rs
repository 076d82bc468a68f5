//! Binary layer serialization. One container format carries every layer
//! kind; a `kind` tag plus fixed per-voxel payload size keeps readers honest.
//!
//! Layout (little-endian throughout):
//!   magic "VXPL" | version u32 | voxel_size f64 | voxels_per_side u32
//!   | kind u32 | block_count u64
//!   | blocks: (block index 3 x i64, then voxels_per_side^3 payloads)
//!
//! Blocks are written in ascending index order so identical layers always
//! produce identical bytes. Readers stop after the declared blocks, so a
//! producer may append trailing chunks (see `append_manifest`).

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use super::{GridIndex, LayerConfig, LayerConfigError, VoxelLayer};

pub const MAGIC: [u8; 4] = *b"VXPL";
pub const FORMAT_VERSION: u32 = 1;
const MANIFEST_MAGIC: [u8; 4] = *b"MANI";

/// Fixed-size binary encoding for one voxel type.
pub trait VoxelCodec: Sized + Clone + Default {
    /// Layer kind tag stored in the header.
    const KIND: u32;
    /// Exact encoded size of one voxel.
    const PAYLOAD_BYTES: usize;
    fn encode(&self, out: &mut Vec<u8>);
    fn decode(bytes: &[u8]) -> Self;
}

#[derive(Debug, Error)]
pub enum LayerIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a layer file (bad magic)")]
    BadMagic,
    #[error("unsupported layer format version {0}")]
    BadVersion(u32),
    #[error("layer kind mismatch: file holds kind {found}, expected {expected}")]
    KindMismatch { found: u32, expected: u32 },
    #[error(transparent)]
    Config(#[from] LayerConfigError),
}

#[derive(Debug, Clone, Copy)]
pub struct LayerHeader {
    pub voxel_size: f64,
    pub voxels_per_side: u32,
    pub kind: u32,
    pub block_count: u64,
}

pub fn save_layer<V, W>(w: &mut W, layer: &VoxelLayer<V>) -> io::Result<()>
where
    V: VoxelCodec,
    W: Write,
{
    w.write_all(&MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_f64::<LittleEndian>(layer.voxel_size())?;
    w.write_u32::<LittleEndian>(layer.voxels_per_side())?;
    w.write_u32::<LittleEndian>(V::KIND)?;
    w.write_u64::<LittleEndian>(layer.num_blocks() as u64)?;

    let mut buf = Vec::with_capacity(V::PAYLOAD_BYTES);
    for block in layer.block_indices_sorted() {
        w.write_i64::<LittleEndian>(block.x)?;
        w.write_i64::<LittleEndian>(block.y)?;
        w.write_i64::<LittleEndian>(block.z)?;
        for v in layer.block(&block).expect("sorted key must exist") {
            buf.clear();
            v.encode(&mut buf);
            debug_assert_eq!(buf.len(), V::PAYLOAD_BYTES);
            w.write_all(&buf)?;
        }
    }
    Ok(())
}

pub fn read_header<R: Read>(r: &mut R) -> Result<LayerHeader, LayerIoError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(LayerIoError::BadMagic);
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(LayerIoError::BadVersion(version));
    }
    Ok(LayerHeader {
        voxel_size: r.read_f64::<LittleEndian>()?,
        voxels_per_side: r.read_u32::<LittleEndian>()?,
        kind: r.read_u32::<LittleEndian>()?,
        block_count: r.read_u64::<LittleEndian>()?,
    })
}

pub fn load_layer<V, R>(r: &mut R) -> Result<VoxelLayer<V>, LayerIoError>
where
    V: VoxelCodec,
    R: Read,
{
    let header = read_header(r)?;
    if header.kind != V::KIND {
        return Err(LayerIoError::KindMismatch { found: header.kind, expected: V::KIND });
    }
    let config = LayerConfig::new(header.voxel_size, header.voxels_per_side)?;
    let mut layer = VoxelLayer::new(config);
    let per_block = config.voxels_per_block();
    let mut payload = vec![0u8; V::PAYLOAD_BYTES];
    for _ in 0..header.block_count {
        let block = GridIndex::new(
            r.read_i64::<LittleEndian>()?,
            r.read_i64::<LittleEndian>()?,
            r.read_i64::<LittleEndian>()?,
        );
        let mut voxels = Vec::with_capacity(per_block);
        for _ in 0..per_block {
            r.read_exact(&mut payload)?;
            voxels.push(V::decode(&payload));
        }
        layer.insert_block_raw(block, voxels.into_boxed_slice());
    }
    Ok(layer)
}

/// Append a provenance chunk after the blocks. Layer readers never look past
/// the declared block count, so this does not disturb round-trips.
pub fn append_manifest<W: Write>(w: &mut W, json: &str) -> io::Result<()> {
    w.write_all(&MANIFEST_MAGIC)?;
    w.write_u64::<LittleEndian>(json.len() as u64)?;
    w.write_all(json.as_bytes())
}

/// Read the trailing manifest chunk if the stream has one left.
pub fn try_read_manifest<R: Read>(r: &mut R) -> Result<Option<String>, LayerIoError> {
    let mut magic = [0u8; 4];
    match r.read_exact(&mut magic) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    if magic != MANIFEST_MAGIC {
        return Err(LayerIoError::BadMagic);
    }
    let len = r.read_u64::<LittleEndian>()?;
    let mut bytes = vec![0u8; len as usize];
    r.read_exact(&mut bytes)?;
    Ok(Some(String::from_utf8_lossy(&bytes).into_owned()))
}
