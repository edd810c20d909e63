use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use thiserror::Error;

use super::{parse_tx_record, ParseError, Transaction};

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Debug, Error)]
pub enum FeedError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: ParseError,
    },
}

/// Streaming reader over an NDJSON feed; yields one transaction per
/// non-blank line, tagging parse failures with their 1-based line number.
pub struct FeedReader<R> {
    lines: io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> FeedReader<R> {
    pub fn new(reader: R) -> Self {
        FeedReader {
            lines: reader.lines(),
            line_no: 0,
        }
    }
}

impl<R: BufRead> Iterator for FeedReader<R> {
    type Item = Result<Transaction, FeedError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(parse_tx_record(&line).map_err(|source| FeedError::Parse {
                line: self.line_no,
                source,
            }));
        }
    }
}

/// Opens a feed file, transparently decompressing gzip input.
pub fn read_feed(path: &Path) -> Result<FeedReader<Box<dyn BufRead>>, FeedError> {
    let mut file = BufReader::new(File::open(path)?);
    let is_gzip = file.fill_buf()?.starts_with(&GZIP_MAGIC);
    let reader: Box<dyn BufRead> = if is_gzip {
        Box::new(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        Box::new(file)
    };
    Ok(FeedReader::new(reader))
}

pub fn write_feed<'a, W: Write>(
    mut out: W,
    txs: impl IntoIterator<Item = &'a Transaction>,
) -> io::Result<()> {
    for tx in txs {
        out.write_all(tx.to_ndjson().as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amount::Amount;
    use crate::chain::{ScriptClass, TxId, TxInput, TxOutput};
    use flate2::write::GzEncoder;
    use flate2::Compression;

    fn sample(n: u8) -> Transaction {
        Transaction {
            txid: TxId::from_bytes([n; 32]),
            block_height: u64::from(n),
            timestamp: 1_600_000_000 + i64::from(n),
            inputs: vec![TxInput {
                prev_txid: TxId::from_bytes([0xee; 32]),
                prev_vout: u32::from(n),
            }],
            outputs: vec![TxOutput {
                value: Amount::from_sat(1_000 + u64::from(n)),
                address: format!("a{n}"),
                script: ScriptClass::P2wpkh,
            }],
        }
    }

    #[test]
    fn reads_plain_and_gzip_feeds() {
        let txs: Vec<_> = (1..=3).map(sample).collect();
        let dir = tempfile::tempdir().unwrap();

        let plain = dir.path().join("feed.ndjson");
        write_feed(File::create(&plain).unwrap(), &txs).unwrap();
        let got: Vec<_> = read_feed(&plain).unwrap().map(Result::unwrap).collect();
        assert_eq!(got, txs);

        let gz = dir.path().join("feed.ndjson.gz");
        let mut enc = GzEncoder::new(File::create(&gz).unwrap(), Compression::default());
        write_feed(&mut enc, &txs).unwrap();
        enc.finish().unwrap();
        let got: Vec<_> = read_feed(&gz).unwrap().map(Result::unwrap).collect();
        assert_eq!(got, txs);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let data = format!("{}\n\n{{broken\n", sample(1).to_ndjson());
        let results: Vec<_> = FeedReader::new(data.as_bytes()).collect();
        assert_eq!(results.len(), 2);
        assert!(results[0].is_ok());
        match &results[1] {
            Err(FeedError::Parse { line, .. }) => assert_eq!(*line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
