use std::path::Path;

use crate::error::{Error, Result};

use super::{write_atomic, LatentStore, LatentVector, Manifest, Record};

/// Reads one vector per row.
///
/// A header row is optional. When present and its first field is `id`, that
/// column carries record ids; otherwise ids are assigned `0..n` in row order.
pub fn import_csv(path: impl AsRef<Path>, dimension: usize) -> Result<LatentStore> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut has_id = false;
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        if i == 0 && !row.iter().all(|f| f.parse::<f64>().is_ok()) {
            has_id = row.get(0) == Some("id");
            continue;
        }
        let expected = dimension + usize::from(has_id);
        if row.len() != expected {
            return Err(Error::CsvArity {
                row: row_no,
                expected,
                found: row.len(),
            });
        }
        let mut fields = row.iter();
        let id = if has_id {
            let f = fields.next().unwrap_or_default();
            Some(f.parse::<u64>().map_err(|_| Error::CsvNumber {
                row: row_no,
                field: f.to_string(),
            })?)
        } else {
            None
        };
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::CsvNumber {
                        row: row_no,
                        field: f.to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        records.push((id, LatentVector::from_vec_unchecked(values)));
    }

    let mut records: Vec<Record> = records
        .into_iter()
        .enumerate()
        .map(|(i, (id, vector))| Record {
            id: id.unwrap_or(i as u64),
            vector,
        })
        .collect();
    records.sort_by_key(|r| r.id);
    let manifest = Manifest {
        source: format!("csv:{}", path.display()),
        ..Manifest::default()
    };
    LatentStore::from_records(dimension, records, manifest)
}

/// Writes `id,c0,...,c{d-1}` followed by one row per record. Floats use the
/// shortest representation that parses back to the same bits.
pub fn export_csv(store: &LatentStore, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string()];
    header.extend((0..store.dimension()).map(|j| format!("c{j}")));
    writer.write_record(&header)?;
    for r in store.records() {
        let mut row = Vec::with_capacity(store.dimension() + 1);
        row.push(r.id.to_string());
        row.extend(r.vector.as_slice().iter().map(|v| format!("{v:?}")));
        writer.write_record(&row)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv buffer: {e}")))?;
    write_atomic(path.as_ref(), &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("in.csv");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn headerless_rows_get_sequential_ids() {
        let dir = tempfile::tempdir().unwrap();
        let store = import_csv(write(&dir, "1.0,0.0\n-1.0,0.0\n"), 2).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.records()[1].id, 1);
        assert_eq!(store.records()[1].vector.as_slice(), &[-1.0, 0.0]);
    }

    #[test]
    fn arity_error_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let err = import_csv(write(&dir, "1.0,0.0\n1.0\n"), 2).unwrap_err();
        assert!(matches!(
            err,
            Error::CsvArity {
                row: 2,
                expected: 2,
                found: 1
            }
        ));
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn exponent_and_integer_forms() {
        let dir = tempfile::tempdir().unwrap();
        let store = import_csv(write(&dir, "1e0,0\n"), 2).unwrap();
        assert_eq!(store.records()[0].vector.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn id_column_from_header() {
        let dir = tempfile::tempdir().unwrap();
        let store = import_csv(write(&dir, "id,c0,c1\n9,1,2\n4,3,4\n"), 2).unwrap();
        let ids: Vec<_> = store.records().iter().map(|r| r.id).collect();
        assert_eq!(ids, vec![4, 9]);
        assert_eq!(store.get(9).unwrap().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn unparsable_number() {
        let dir = tempfile::tempdir().unwrap();
        let err = import_csv(write(&dir, "c0,c1\n1,abc\n"), 2).unwrap_err();
        assert!(matches!(err, Error::CsvNumber { row: 2, .. }));
    }

    #[test]
    fn export_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out.csv");
        let empty = LatentStore::new(3, Manifest::default()).unwrap();
        export_csv(&empty, &out).unwrap();
        assert_eq!(fs::read_to_string(&out).unwrap(), "id,c0,c1,c2\n");

        let one = LatentStore::from_vectors(
            2,
            [LatentVector::new(vec![0.1, -2.5e-300]).unwrap()],
            Manifest::default(),
        )
        .unwrap();
        export_csv(&one, &out).unwrap();
        let text = fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back = import_csv(&out, 2).unwrap();
        assert_eq!(back.records(), one.records());
    }
}
