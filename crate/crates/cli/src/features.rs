//! Feature-table CSV: `consumer_id,label,synthetic,f0,f1,...`.

use std::path::Path;

use ndarray::Array2;

pub struct FeatureTable {
    pub ids: Vec<String>,
    pub labels: Vec<u8>,
    pub synthetic: Vec<bool>,
    pub features: Array2<f64>,
}

impl FeatureTable {
    pub fn real(ids: Vec<String>, labels: Vec<u8>, features: Array2<f64>) -> Self {
        let synthetic = vec![false; ids.len()];
        Self { ids, labels, synthetic, features }
    }

    pub fn write(&self, path: &Path) -> Result<(), String> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(|e| e.to_string())?;
        let mut header = vec!["consumer_id".to_string(), "label".into(), "synthetic".into()];
        header.extend((0..self.features.ncols()).map(|j| format!("f{j}")));
        wtr.write_record(&header).map_err(|e| e.to_string())?;
        for (i, row) in self.features.rows().into_iter().enumerate() {
            let mut record = vec![self.ids[i].clone(), self.labels[i].to_string(), (self.synthetic[i] as u8).to_string()];
            record.extend(row.iter().map(|v| v.to_string()));
            wtr.write_record(&record).map_err(|e| e.to_string())?;
        }
        wtr.flush().map_err(|e| e.to_string())
    }

    pub fn read(path: &Path) -> Result<Self, String> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let header = rdr.headers().map_err(|e| e.to_string())?.clone();
        if header.len() < 4 || &header[0] != "consumer_id" || &header[1] != "label" || &header[2] != "synthetic" {
            return Err(format!("{}: expected header consumer_id,label,synthetic,f0,...", path.display()));
        }
        let width = header.len() - 3;
        let (mut ids, mut labels, mut synthetic, mut values) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| e.to_string())?;
            let at = |what: &str| format!("{}: row {}: bad {what}", path.display(), line + 1);
            if record.len() != header.len() {
                return Err(at("field count"));
            }
            ids.push(record[0].to_string());
            labels.push(match &record[1] {
                "0" => 0,
                "1" => 1,
                _ => return Err(at("label")),
            });
            synthetic.push(match &record[2] {
                "0" => false,
                "1" => true,
                _ => return Err(at("synthetic flag")),
            });
            for cell in record.iter().skip(3) {
                values.push(cell.parse::<f64>().map_err(|_| at("feature value"))?);
            }
        }
        let features = Array2::from_shape_vec((ids.len(), width), values).map_err(|e| e.to_string())?;
        Ok(Self { ids, labels, synthetic, features })
    }
}
