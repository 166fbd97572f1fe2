//! Mesh and field exchange: CSV tables (vertex, cell, value) and a single
//! JSON container with explicit layout metadata.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Layout, ScalarField, SkewField, VectorField};
use crate::mesh::{Domain, DomainKind, Mesh};

/// Write `vertices.csv` (coordinates + boundary flag) and `cells.csv`
/// (vertex indices) into a directory.
pub fn export_mesh_csv(mesh: &Mesh, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut vf = std::fs::File::create(dir.join("vertices.csv"))?;
    let dim = mesh.dim();
    if dim == 2 {
        writeln!(vf, "x,y,boundary")?;
    } else {
        writeln!(vf, "x,y,z,boundary")?;
    }
    for v in 0..mesh.vertex_count() {
        let p = mesh.vertex(v);
        let b = mesh.is_boundary_vertex(v) as u8;
        if dim == 2 {
            writeln!(vf, "{:.17e},{:.17e},{b}", p[0], p[1])?;
        } else {
            writeln!(vf, "{:.17e},{:.17e},{:.17e},{b}", p[0], p[1], p[2])?;
        }
    }
    let mut cf = std::fs::File::create(dir.join("cells.csv"))?;
    let header: Vec<String> = (0..=dim).map(|k| format!("v{k}")).collect();
    writeln!(cf, "{}", header.join(","))?;
    for c in 0..mesh.cell_count() {
        let row: Vec<String> = mesh.cell(c).iter().map(|v| v.to_string()).collect();
        writeln!(cf, "{}", row.join(","))?;
    }
    Ok(())
}

/// Read the tables written by [`export_mesh_csv`] back into a mesh.
pub fn import_mesh_csv(domain: Domain, resolution: u32, dir: &Path) -> Result<Arc<Mesh>> {
    let dim = domain.dimension();
    let vfile = BufReader::new(std::fs::File::open(dir.join("vertices.csv"))?);
    let mut vertices = Vec::new();
    let mut boundary = Vec::new();
    for (i, line) in vfile.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != dim + 1 {
            return Err(Error::invalid(format!(
                "vertices.csv row {i}: expected {} columns",
                dim + 1
            )));
        }
        for c in &cols[..dim] {
            vertices.push(
                c.parse::<f64>()
                    .map_err(|e| Error::invalid(format!("vertices.csv row {i}: {e}")))?,
            );
        }
        boundary.push(cols[dim].trim() == "1");
    }
    let cfile = BufReader::new(std::fs::File::open(dir.join("cells.csv"))?);
    let mut cells = Vec::new();
    for (i, line) in cfile.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        for c in line.split(',') {
            cells.push(
                c.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::invalid(format!("cells.csv row {i}: {e}")))?,
            );
        }
    }
    Mesh::from_raw(domain, resolution, vertices, cells, boundary)
}

/// JSON container for any discrete field; the mesh is identified by
/// (domain, resolution) and rebuilt deterministically on import.
#[derive(Debug, Serialize, Deserialize)]
pub struct FieldJson {
    pub schema_version: String,
    pub kind: FieldKind,
    pub domain: DomainKind,
    pub resolution: u32,
    pub layout: Layout,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Scalar,
    Vector,
    Skew,
}

pub fn write_scalar_json(f: &ScalarField, path: &Path) -> Result<()> {
    write_json(
        &FieldJson {
            schema_version: crate::REPORT_SCHEMA_VERSION.to_string(),
            kind: FieldKind::Scalar,
            domain: f.mesh.domain.kind,
            resolution: f.mesh.resolution,
            layout: f.layout,
            values: f.values.clone(),
        },
        path,
    )
}

pub fn write_vector_json(f: &VectorField, path: &Path) -> Result<()> {
    write_json(
        &FieldJson {
            schema_version: crate::REPORT_SCHEMA_VERSION.to_string(),
            kind: FieldKind::Vector,
            domain: f.mesh.domain.kind,
            resolution: f.mesh.resolution,
            layout: Layout::Cell,
            values: f.values.clone(),
        },
        path,
    )
}

pub fn write_skew_json(f: &SkewField, path: &Path) -> Result<()> {
    write_json(
        &FieldJson {
            schema_version: crate::REPORT_SCHEMA_VERSION.to_string(),
            kind: FieldKind::Skew,
            domain: f.mesh.domain.kind,
            resolution: f.mesh.resolution,
            layout: Layout::Cell,
            values: f.entries.clone(),
        },
        path,
    )
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::File::create(path)?;
    let text = serde_json::to_string_pretty(value)?;
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn read_field_json(path: &Path) -> Result<(FieldJson, Arc<Mesh>)> {
    let text = std::fs::read_to_string(path)?;
    let parsed: FieldJson = serde_json::from_str(&text)?;
    let mesh = Mesh::build(Domain::new(parsed.domain), parsed.resolution)?;
    Ok((parsed, mesh))
}

pub fn read_scalar_json(path: &Path) -> Result<ScalarField> {
    let (parsed, mesh) = read_field_json(path)?;
    if parsed.kind != FieldKind::Scalar {
        return Err(Error::invalid(format!(
            "{} holds a {:?} field, expected scalar",
            path.display(),
            parsed.kind
        )));
    }
    ScalarField::new(mesh, parsed.layout, parsed.values)
}

pub fn read_vector_json(path: &Path) -> Result<VectorField> {
    let (parsed, mesh) = read_field_json(path)?;
    if parsed.kind != FieldKind::Vector {
        return Err(Error::invalid(format!(
            "{} holds a {:?} field, expected vector",
            path.display(),
            parsed.kind
        )));
    }
    VectorField::new(mesh, parsed.values)
}

pub fn read_skew_json(path: &Path) -> Result<SkewField> {
    let (parsed, mesh) = read_field_json(path)?;
    if parsed.kind != FieldKind::Skew {
        return Err(Error::invalid(format!(
            "{} holds a {:?} field, expected skew",
            path.display(),
            parsed.kind
        )));
    }
    SkewField::new(mesh, parsed.values)
}

/// Value table: one value per entity (vertex or cell) with its index.
pub fn write_scalar_csv(f: &ScalarField, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::File::create(path)?;
    let label = match f.layout {
        Layout::Vertex => "vertex",
        Layout::Cell => "cell",
    };
    writeln!(file, "{label},value")?;
    for (i, v) in f.values.iter().enumerate() {
        writeln!(file, "{i},{v:.17e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mesh_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = Mesh::build(Domain::new(DomainKind::UnitDisk), 6).unwrap();
        export_mesh_csv(&mesh, dir.path()).unwrap();
        let back = import_mesh_csv(mesh.domain, 6, dir.path()).unwrap();
        assert_eq!(back.vertex_count(), mesh.vertex_count());
        assert_eq!(back.cell_count(), mesh.cell_count());
        assert!((back.h() - mesh.h()).abs() < 1e-15);
        for v in 0..mesh.vertex_count() {
            assert_eq!(back.is_boundary_vertex(v), mesh.is_boundary_vertex(v));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn scalar_json_roundtrip(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mesh = Mesh::build(Domain::new(DomainKind::UnitSquare), 4).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let values: Vec<f64> = (0..mesh.vertex_count()).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let f = ScalarField::new(mesh, Layout::Vertex, values).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("f.json");
            write_scalar_json(&f, &path).unwrap();
            let back = read_scalar_json(&path).unwrap();
            prop_assert_eq!(back.values, f.values);
            prop_assert_eq!(back.layout, f.layout);
        }
    }

    #[test]
    fn kind_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = Mesh::build(Domain::new(DomainKind::UnitSquare), 3).unwrap();
        let f = ScalarField::from_vertex_fn(&mesh, |p| p[0]);
        let path = dir.path().join("f.json");
        write_scalar_json(&f, &path).unwrap();
        assert!(read_vector_json(&path).is_err());
    }
}
