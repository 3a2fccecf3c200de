use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime};
use rayon::prelude::*;
use walkdir::WalkDir;

use super::{Dataset, DatasetError, SourceFormat, Trace, TracePoint};
use crate::geo::GeoPoint;

const GEOLIFE_HEADER_LINES: usize = 6;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn require_dir(root: &Path) -> Result<(), DatasetError> {
    if root.is_dir() {
        Ok(())
    } else {
        Err(DatasetError::MissingDirectory(root.to_path_buf()))
    }
}

/// Strict coordinate parsing shared by the loaders: both values must be
/// numbers within the usual degree ranges.
fn parse_coord(file: &Path, line: usize, lat: &str, lon: &str) -> Result<GeoPoint, DatasetError> {
    let lat: f64 = lat
        .trim()
        .parse()
        .map_err(|e| DatasetError::parse(file, line, format!("latitude {lat:?}: {e}")))?;
    let lon: f64 = lon
        .trim()
        .parse()
        .map_err(|e| DatasetError::parse(file, line, format!("longitude {lon:?}: {e}")))?;
    if !(-180.0..=180.0).contains(&lon) {
        return Err(DatasetError::parse(
            file,
            line,
            format!("longitude {lon} outside [-180, 180]"),
        ));
    }
    GeoPoint::new(lat, lon).map_err(|e| DatasetError::coord(file, line, e))
}

fn group_into_dataset(
    name: &str,
    format: SourceFormat,
    parts: impl IntoIterator<Item = (String, Vec<TracePoint>)>,
) -> Result<Dataset, DatasetError> {
    let mut by_user: BTreeMap<String, Vec<TracePoint>> = BTreeMap::new();
    for (user, pts) in parts {
        by_user.entry(user).or_default().extend(pts);
    }
    let traces = by_user.into_iter().map(|(user, pts)| Trace::new(user, pts)).collect();
    Dataset::new(name, format, traces)
}

/// Loads a Geolife tree: every `.plt` file below `root`. The user id is the
/// directory holding the `Trajectory` folder (or the file's parent directory
/// when there is no such folder).
pub fn load_geolife(root: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let root = root.as_ref();
    require_dir(root)?;
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| DatasetError::Io {
            path: root.to_path_buf(),
            source: e.into(),
        })?;
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|x| x.eq_ignore_ascii_case("plt")) {
            files.push(entry.into_path());
        }
    }
    let parts = files
        .par_iter()
        .map(|f| Ok((geolife_user(f), parse_plt(f)?)))
        .collect::<Result<Vec<_>, DatasetError>>()?;
    group_into_dataset("geolife", SourceFormat::Geolife, parts)
}

fn geolife_user(file: &Path) -> String {
    let parent = file.parent();
    let dir = match parent {
        Some(p) if p.file_name().is_some_and(|n| n == "Trajectory") => p.parent(),
        other => other,
    };
    dir.and_then(|d| d.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unknown".to_string())
}

fn parse_plt(file: &Path) -> Result<Vec<TracePoint>, DatasetError> {
    let reader = BufReader::new(fs::File::open(file).map_err(io_err(file))?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(file))?;
        let lineno = idx + 1;
        if idx < GEOLIFE_HEADER_LINES || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() < 7 {
            return Err(DatasetError::parse(
                file,
                lineno,
                format!("expected 7 fields, found {}", fields.len()),
            ));
        }
        let pos = parse_coord(file, lineno, fields[0], fields[1])?;
        let stamp = format!("{} {}", fields[5].trim(), fields[6].trim());
        let t = NaiveDateTime::parse_from_str(&stamp, "%Y-%m-%d %H:%M:%S")
            .map_err(|e| DatasetError::parse(file, lineno, format!("timestamp {stamp:?}: {e}")))?
            .and_utc()
            .timestamp();
        out.push(TracePoint::new(t, pos));
    }
    Ok(out)
}

/// Loads a Cabspotting directory: one `new_<cab>.txt` file per cab with
/// rows `lat lon occupancy unix_time`, newest first.
pub fn load_sf_cabs(root: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let root = root.as_ref();
    require_dir(root)?;
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let path = entry.map_err(io_err(root))?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned());
        if path.is_file()
            && path.extension().is_some_and(|x| x == "txt")
            && !name.as_deref().is_some_and(|n| n.starts_with('_'))
        {
            files.push(path);
        }
    }
    files.sort();
    let parts = files
        .par_iter()
        .map(|f| {
            let stem = f.file_stem().unwrap_or_default().to_string_lossy();
            let user = stem.strip_prefix("new_").unwrap_or(&stem).to_string();
            Ok((user, parse_cab_file(f)?))
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    group_into_dataset("sf_cabs", SourceFormat::SfCabs, parts)
}

fn parse_cab_file(file: &Path) -> Result<Vec<TracePoint>, DatasetError> {
    let reader = BufReader::new(fs::File::open(file).map_err(io_err(file))?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(file))?;
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 4 {
            return Err(DatasetError::parse(
                file,
                lineno,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let pos = parse_coord(file, lineno, fields[0], fields[1])?;
        let occupancy: u8 = fields[2]
            .parse()
            .map_err(|e| DatasetError::parse(file, lineno, format!("occupancy {:?}: {e}", fields[2])))?;
        let t: i64 = fields[3]
            .parse()
            .map_err(|e| DatasetError::parse(file, lineno, format!("timestamp {:?}: {e}", fields[3])))?;
        out.push(TracePoint {
            t,
            pos,
            occupied: Some(occupancy != 0),
        });
    }
    Ok(out)
}

/// Loads a SNAP check-in file (Brightkite, Gowalla): tab-separated rows
/// `user, ISO-8601 time, lat, lon, location_id`. Rows with missing or empty
/// fields are skipped and counted in the provenance.
pub fn load_checkins(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let reader = BufReader::new(fs::File::open(path).map_err(io_err(path))?);
    let mut by_user: BTreeMap<String, Vec<TracePoint>> = BTreeMap::new();
    let mut skipped = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() < 4 || fields[..4].iter().any(|f| f.is_empty()) {
            skipped += 1;
            continue;
        }
        let t = DateTime::parse_from_rfc3339(fields[1])
            .map_err(|e| DatasetError::parse(path, lineno, format!("timestamp {:?}: {e}", fields[1])))?
            .timestamp();
        let pos = parse_coord(path, lineno, fields[2], fields[3])?;
        by_user
            .entry(fields[0].to_string())
            .or_default()
            .push(TracePoint::new(t, pos));
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} incomplete rows", path.display());
    }
    let mut ds = group_into_dataset("checkins", SourceFormat::Checkins, by_user)?;
    ds.provenance.skipped_rows = skipped;
    Ok(ds)
}

/// Loads any supported format, naming the dataset `name`.
pub fn load(format: SourceFormat, path: impl AsRef<Path>, name: &str) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let mut ds = match format {
        SourceFormat::Geolife => load_geolife(path)?,
        SourceFormat::SfCabs => load_sf_cabs(path)?,
        SourceFormat::Checkins => load_checkins(path)?,
        SourceFormat::Canonical => load_canonical(path)?,
        SourceFormat::Synthetic => {
            return Err(DatasetError::UnknownFormat(
                "synthetic datasets are not loadable".into(),
            ))
        }
    };
    ds.name = name.to_string();
    Ok(ds)
}

const CANONICAL_HEADER: [&str; 4] = ["user_id", "unix_time", "lat", "lon"];

/// Writes the interchange CSV `user_id,unix_time,lat,lon`, coordinates at
/// 1e-7 degree precision. Traces are written in dataset order.
pub fn write_canonical<W: Write>(ds: &Dataset, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CANONICAL_HEADER)?;
    for tr in &ds.traces {
        for p in &tr.points {
            w.write_record([
                tr.user_id.as_str(),
                &p.t.to_string(),
                &format!("{:.7}", p.pos.lat()),
                &format!("{:.7}", p.pos.lon()),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_canonical(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(io_err(path))?;
    write_canonical(ds, std::io::BufWriter::new(file)).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })
}

/// Reads the interchange CSV. `origin` is used in error messages only.
pub fn read_canonical<R: Read>(input: R, origin: &Path, name: &str) -> Result<Dataset, DatasetError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = r.headers().map_err(|e| DatasetError::parse(origin, 1, e))?.clone();
    if headers.iter().ne(CANONICAL_HEADER) {
        return Err(DatasetError::parse(
            origin,
            1,
            format!("expected header {}", CANONICAL_HEADER.join(",")),
        ));
    }
    // Preserve first-appearance order of users.
    let mut order: Vec<String> = Vec::new();
    let mut by_user: std::collections::HashMap<String, Vec<TracePoint>> = Default::default();
    for (idx, rec) in r.records().enumerate() {
        let lineno = idx + 2;
        let rec = rec.map_err(|e| DatasetError::parse(origin, lineno, e))?;
        if rec.len() != 4 {
            return Err(DatasetError::parse(origin, lineno, "expected 4 fields"));
        }
        let t: i64 = rec[1]
            .parse()
            .map_err(|e| DatasetError::parse(origin, lineno, format!("unix_time {:?}: {e}", &rec[1])))?;
        let pos = parse_coord(origin, lineno, &rec[2], &rec[3])?;
        let user = &rec[0];
        match by_user.get_mut(user) {
            Some(v) => v.push(TracePoint::new(t, pos)),
            None => {
                order.push(user.to_string());
                by_user.insert(user.to_string(), vec![TracePoint::new(t, pos)]);
            }
        }
    }
    let traces = order
        .into_iter()
        .map(|u| {
            let pts = by_user.remove(&u).unwrap_or_default();
            Trace::new(u, pts)
        })
        .collect();
    Dataset::new(name, SourceFormat::Canonical, traces)
}

pub fn load_canonical(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(io_err(path))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "canonical".into());
    read_canonical(BufReader::new(file), path, &name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::test_util::trace;
    use proptest::prelude::*;

    const PLT_HEADER: &str =
        "Geolife trajectory\nWGS 84\nAltitude is in Feet\nReserved 3\n0,2,255,My Track,0,0,2,8421376\n0\n";

    fn write(dir: &Path, rel: &str, body: &str) {
        let p = dir.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, body).unwrap();
    }

    #[test]
    fn geolife_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{PLT_HEADER}39.984702,116.318417,0,492,39744.1201851852,2008-10-23,02:53:04\n\
             39.984683,116.31845,0,492,39744.1202546296,2008-10-23,02:53:10\n"
        );
        write(dir.path(), "Data/000/Trajectory/20081023025304.plt", &body);
        let ds = load_geolife(dir.path()).unwrap();
        assert_eq!(ds.traces.len(), 1);
        let tr = &ds.traces[0];
        assert_eq!(tr.user_id, "000");
        assert_eq!(tr.len(), 2);
        // 2008-10-23T02:53:04Z
        assert_eq!(tr.points[0].t, 1_224_730_384);
        assert_eq!(tr.points[1].t - tr.points[0].t, 6);
        assert_eq!(tr.points[0].pos.lat(), 39.984702);
        assert_eq!(tr.points[0].pos.lon(), 116.318417);
    }

    #[test]
    fn geolife_merges_files_per_user() {
        let dir = tempfile::tempdir().unwrap();
        let later = format!("{PLT_HEADER}40.0,116.3,0,0,0,2008-10-24,00:00:00\n");
        let earlier = format!("{PLT_HEADER}40.0,116.3,0,0,0,2008-10-23,00:00:00\n");
        write(dir.path(), "001/Trajectory/a.plt", &later);
        write(dir.path(), "001/Trajectory/b.plt", &earlier);
        write(dir.path(), "002/Trajectory/a.plt", &earlier);
        let ds = load_geolife(dir.path()).unwrap();
        assert_eq!(ds.traces.len(), 2);
        assert!(ds.traces[0].is_time_sorted());
        assert_eq!(ds.traces[0].len(), 2);
    }

    #[test]
    fn geolife_empty_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_geolife(dir.path()).unwrap().traces.is_empty());
        assert!(matches!(
            load_geolife(dir.path().join("nope")),
            Err(DatasetError::MissingDirectory(_))
        ));
    }

    #[test]
    fn geolife_out_of_range_latitude() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{PLT_HEADER}91.0,116.3,0,0,0,2008-10-23,00:00:00\n");
        write(dir.path(), "003/Trajectory/x.plt", &body);
        match load_geolife(dir.path()) {
            Err(DatasetError::Parse { line, file, .. }) => {
                assert_eq!(line, 7);
                assert!(file.ends_with("x.plt"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn sf_cabs_fixture() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "new_abboip.txt",
            "37.75134 -122.39488 0 1213084687\n37.75136 -122.39527 1 1213084659\n37.75199 -122.3946 1 1213084540\n",
        );
        write(dir.path(), "new_other.txt", "37.7 -122.4 1 1213084000\n");
        write(dir.path(), "_cabs.txt", "<cab id=\"abboip\" updates=\"3\"/>\n");
        let ds = load_sf_cabs(dir.path()).unwrap();
        assert_eq!(ds.traces.len(), 2);
        let tr = &ds.traces[0];
        assert_eq!(tr.user_id, "abboip");
        let ts: Vec<i64> = tr.points.iter().map(|p| p.t).collect();
        assert_eq!(ts, vec![1213084540, 1213084659, 1213084687]);
        assert_eq!(tr.points[2].occupied, Some(false));
        assert_eq!(tr.points[0].occupied, Some(true));
    }

    #[test]
    fn sf_cabs_bad_occupancy() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "new_x.txt", "37.7 -122.4 0.5 1213084000\n");
        assert!(matches!(
            load_sf_cabs(dir.path()),
            Err(DatasetError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn checkins_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkins.txt");
        fs::write(
            &path,
            "0\t2010-10-17T01:48:53Z\t39.747652\t-104.99251\t88c46bf20db295831bd2d1718ad7e6f5\n\
             0\t2010-10-16T06:02:04Z\t0.0\t0.0\td41d8cd98f00b204e9800998ecf8427e\n\
             1\t2010-10-13T00:21:28Z\t39.891383\t-105.070814\t7a0f88982aa015062b95e3b4843f9ca2\n\
             2\t\t39.0\t-105.0\tx\n",
        )
        .unwrap();
        let ds = load_checkins(&path).unwrap();
        assert_eq!(ds.traces.len(), 2);
        assert_eq!(ds.traces[0].len(), 2);
        assert_eq!(ds.traces[1].len(), 1);
        assert_eq!(ds.provenance.skipped_rows, 1);
        // Zero coordinates are valid and kept.
        assert_eq!(ds.traces[0].points[0].pos.lat(), 0.0);
        assert!(ds.traces[0].is_time_sorted());
    }

    #[test]
    fn checkins_bad_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        fs::write(&path, "0\t2010-13-45 nope\t39.7\t-104.9\tx\n").unwrap();
        assert!(matches!(load_checkins(&path), Err(DatasetError::Parse { line: 1, .. })));
    }

    #[test]
    fn canonical_rejects_bad_header() {
        let err = read_canonical("a,b,c,d\n".as_bytes(), Path::new("x"), "x").unwrap_err();
        assert!(matches!(err, DatasetError::Parse { line: 1, .. }));
    }

    proptest! {
        #[test]
        fn canonical_round_trip_is_bit_exact(
            pts in prop::collection::vec((0i64..2_000_000_000, -90.0..90.0f64, -179.9..180.0f64), 1..40),
            shuffle in any::<u64>(),
        ) {
            let mut a: Vec<(i64, f64, f64)> = pts.clone();
            let k = (shuffle as usize) % a.len();
            a.rotate_left(k);
            let ds = Dataset::new("d", SourceFormat::Synthetic, vec![trace("u1", &a), trace("u2", &pts)]).unwrap();
            for t in &ds.traces {
                prop_assert!(t.is_time_sorted());
            }
            let mut first = Vec::new();
            write_canonical(&ds, &mut first).unwrap();
            let back = read_canonical(first.as_slice(), Path::new("mem"), "d").unwrap();
            let mut second = Vec::new();
            write_canonical(&back, &mut second).unwrap();
            prop_assert_eq!(&first, &second);
            for (orig, read) in ds.traces.iter().zip(&back.traces) {
                prop_assert_eq!(&orig.user_id, &read.user_id);
                for (p, q) in orig.points.iter().zip(&read.points) {
                    prop_assert_eq!(p.t, q.t);
                    prop_assert!((p.pos.lat() - q.pos.lat()).abs() <= 0.5e-7 + 1e-12);
                    let dlon = (p.pos.lon() - q.pos.lon()).abs();
                    prop_assert!(dlon <= 0.5e-7 + 1e-12 || (360.0 - dlon) <= 0.5e-7 + 1e-12);
                }
            }
        }
    }
}
