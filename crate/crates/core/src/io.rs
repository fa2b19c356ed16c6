//! Field dumps: legacy ASCII VTK for viewing and `dof_index,value` CSV for
//! exact round trips.

use std::io::{Read, Write};

use crate::assembly::CellBasis;
use crate::error::{invalid, Error, Result};
use crate::feec::{DeRham, FieldVector, SpaceKind};
use crate::geom::{scale, Vec3};
use crate::mesh::Mesh;

/// VTK cell type of a linear tetrahedron.
pub const VTK_TETRA: u8 = 10;

const CENTROID: [f64; 4] = [0.25; 4];

fn check_len(complex: &DeRham, f: &FieldVector) -> Result<()> {
    if f.len() != complex.space(f.kind).dim() {
        return Err(invalid(format!("{:?} field has {} coefficients, space has {}", f.kind, f.len(), complex.space(f.kind).dim())));
    }
    Ok(())
}

fn eval_in_cell(mesh: &Mesh, basis: &CellBasis, t: usize, f: &FieldVector, bary: &[f64; 4]) -> Result<Vec3> {
    Ok(match f.kind {
        SpaceKind::Curl => basis.eval_edge_field(&mesh.tet_edges()[t].map(|e| f.coeffs[e]), bary),
        SpaceKind::Div => basis.eval_face_field(&mesh.tet_faces()[t].map(|e| f.coeffs[e]), bary),
        _ => return Err(invalid("only edge and face fields are vector valued")),
    })
}

/// Value of an edge or face field at each cell centroid.
pub fn cell_values(complex: &DeRham, f: &FieldVector) -> Result<Vec<Vec3>> {
    check_len(complex, f)?;
    let mesh = complex.mesh();
    (0..mesh.entity_count(3))
        .map(|t| eval_in_cell(mesh, &CellBasis::new(mesh.geometry(t)), t, f, &CENTROID))
        .collect()
}

/// Vertex values of an edge or face field, averaged over the cells around
/// each vertex.
pub fn vertex_average(complex: &DeRham, f: &FieldVector) -> Result<Vec<Vec3>> {
    check_len(complex, f)?;
    let mesh = complex.mesh();
    let nv = mesh.entity_count(0);
    let mut sum = vec![[0.0; 3]; nv];
    let mut count = vec![0usize; nv];
    for (t, tet) in mesh.tets().iter().enumerate() {
        let basis = CellBasis::new(mesh.geometry(t));
        for (i, &v) in tet.iter().enumerate() {
            let mut bary = [0.0; 4];
            bary[i] = 1.0;
            let val = eval_in_cell(mesh, &basis, t, f, &bary)?;
            for k in 0..3 {
                sum[v][k] += val[k];
            }
            count[v] += 1;
        }
    }
    Ok(sum.into_iter().zip(count).map(|(s, c)| scale(1.0 / c as f64, s)).collect())
}

fn write_vectors(out: &mut impl Write, name: &str, values: &[Vec3]) -> std::io::Result<()> {
    writeln!(out, "VECTORS {name} double")?;
    for v in values {
        writeln!(out, "{:e} {:e} {:e}", v[0], v[1], v[2])?;
    }
    Ok(())
}

/// Legacy ASCII unstructured grid with optional vertex and cell vectors.
pub fn write_vtk(
    mut out: impl Write,
    mesh: &Mesh,
    point_vectors: &[(&str, &[Vec3])],
    cell_vectors: &[(&str, &[Vec3])],
) -> Result<()> {
    let (nv, nt) = (mesh.entity_count(0), mesh.entity_count(3));
    for (name, v) in point_vectors {
        if v.len() != nv {
            return Err(invalid(format!("point data {name} has {} values for {nv} vertices", v.len())));
        }
    }
    for (name, v) in cell_vectors {
        if v.len() != nt {
            return Err(invalid(format!("cell data {name} has {} values for {nt} cells", v.len())));
        }
    }
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "mhd fields")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {nv} double")?;
    for p in mesh.vertices() {
        writeln!(out, "{} {} {}", p[0], p[1], p[2])?;
    }
    writeln!(out, "CELLS {nt} {}", 5 * nt)?;
    for t in mesh.tets() {
        writeln!(out, "4 {} {} {} {}", t[0], t[1], t[2], t[3])?;
    }
    writeln!(out, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(out, "{VTK_TETRA}")?;
    }
    if !cell_vectors.is_empty() {
        writeln!(out, "CELL_DATA {nt}")?;
        for (name, v) in cell_vectors {
            write_vectors(&mut out, name, v)?;
        }
    }
    if !point_vectors.is_empty() {
        writeln!(out, "POINT_DATA {nv}")?;
        for (name, v) in point_vectors {
            write_vectors(&mut out, name, v)?;
        }
    }
    Ok(())
}

/// VTK dump of a velocity (edge field, averaged to vertices) and a magnetic
/// field (face or edge field, sampled at cell centroids).
pub fn write_fields(out: impl Write, complex: &DeRham, u: &FieldVector, b: &FieldVector) -> Result<()> {
    let uv = vertex_average(complex, u)?;
    let bc = cell_values(complex, b)?;
    write_vtk(out, complex.mesh(), &[("u", &uv)], &[("B", &bc)])
}

/// Writes `dof_index,value` rows with round-trip precision.
pub fn write_field_csv(out: impl Write, f: &FieldVector) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["dof_index", "value"]).map_err(csv_err)?;
    for (i, v) in f.coeffs.iter().enumerate() {
        w.write_record([i.to_string(), format!("{v:e}")]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a field written by [`write_field_csv`]; every DOF must appear once.
pub fn read_field_csv(input: impl Read, kind: SpaceKind, len: usize) -> Result<FieldVector> {
    let mut r = csv::Reader::from_reader(input);
    let mut coeffs = vec![f64::NAN; len];
    let mut seen = 0;
    for rec in r.deserialize::<(usize, f64)>() {
        let (i, v) = rec.map_err(csv_err)?;
        if i >= len || !coeffs[i].is_nan() {
            return Err(invalid(format!("dof index {i} out of range or repeated")));
        }
        coeffs[i] = v;
        seen += 1;
    }
    if seen != len {
        return Err(invalid(format!("field file has {seen} of {len} coefficients")));
    }
    Ok(FieldVector::new(kind, coeffs))
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => invalid(format!("malformed field file: {other:?}")),
    }
}
