//! CPLX1 binary persistence for complex matrices and vectors.
//!
//! Layout: 8-byte magic `CPLX1\0\0\0`, `u64` rows, `u64` cols
//! (little-endian), then row-major interleaved real/imag `f64` pairs,
//! little-endian. Vectors are stored as single-column matrices.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{CMatrix, CVector, Error, Result, C64};

pub const MAGIC: [u8; 8] = *b"CPLX1\0\0\0";

/// Maximum element count accepted when reading, as a guard against
/// corrupted headers.
const MAX_ELEMENTS: u64 = 1 << 32;

pub fn write_matrix<W: Write>(out: &mut W, matrix: &CMatrix) -> Result<()> {
    out.write_all(&MAGIC)?;
    out.write_all(&(matrix.nrows() as u64).to_le_bytes())?;
    out.write_all(&(matrix.ncols() as u64).to_le_bytes())?;
    for row in 0..matrix.nrows() {
        for col in 0..matrix.ncols() {
            let z = matrix[(row, col)];
            out.write_all(&z.re.to_le_bytes())?;
            out.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix<R: Read>(input: &mut R) -> Result<CMatrix> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::BadFormat(format!(
            "bad magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let mut word = [0u8; 8];
    input.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word);
    input.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word);
    let elements = rows
        .checked_mul(cols)
        .filter(|&e| e <= MAX_ELEMENTS)
        .ok_or_else(|| Error::BadFormat(format!("implausible shape {rows}x{cols}")))?;

    let mut data = Vec::with_capacity(elements as usize);
    let mut pair = [0u8; 16];
    for _ in 0..elements {
        input.read_exact(&mut pair)?;
        let re = f64::from_le_bytes(pair[0..8].try_into().unwrap());
        let im = f64::from_le_bytes(pair[8..16].try_into().unwrap());
        data.push(C64::new(re, im));
    }
    // data is row-major; DMatrix::from_row_slice matches
    Ok(CMatrix::from_row_slice(rows as usize, cols as usize, &data))
}

pub fn write_matrix_file<P: AsRef<Path>>(path: P, matrix: &CMatrix) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_matrix(&mut writer, matrix)?;
    writer.flush()?;
    Ok(())
}

pub fn read_matrix_file<P: AsRef<Path>>(path: P) -> Result<CMatrix> {
    let mut reader = BufReader::new(File::open(path)?);
    read_matrix(&mut reader)
}

pub fn write_vector_file<P: AsRef<Path>>(path: P, vector: &CVector) -> Result<()> {
    let matrix = CMatrix::from_column_slice(vector.len(), 1, vector.as_slice());
    write_matrix_file(path, &matrix)
}

pub fn read_vector_file<P: AsRef<Path>>(path: P) -> Result<CVector> {
    let matrix = read_matrix_file(path)?;
    if matrix.ncols() != 1 {
        return Err(Error::BadFormat(format!(
            "expected a single-column vector, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    Ok(matrix.column(0).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let matrix = CMatrix::from_fn(3, 2, |i, j| {
            C64::new(i as f64 + 0.125, -(j as f64) * 3.5e-7)
        });
        let mut buf = Vec::new();
        write_matrix(&mut buf, &matrix).unwrap();
        assert_eq!(&buf[0..8], &MAGIC);
        let back = read_matrix(&mut buf.as_slice()).unwrap();
        assert_eq!(matrix, back);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut buf = vec![0u8; 24];
        buf[0..8].copy_from_slice(b"NOTCPLX\0");
        assert!(matches!(
            read_matrix(&mut buf.as_slice()),
            Err(Error::BadFormat(_))
        ));
    }

    #[test]
    fn rejects_truncated_payload() {
        let matrix = CMatrix::from_element(2, 2, C64::new(1.0, 2.0));
        let mut buf = Vec::new();
        write_matrix(&mut buf, &matrix).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_matrix(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn vector_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.cplx1");
        let v = CVector::from_vec(vec![C64::new(1.5, -0.5), C64::new(0.0, 2.25)]);
        write_vector_file(&path, &v).unwrap();
        let back = read_vector_file(&path).unwrap();
        assert_eq!(v, back);
    }
}
