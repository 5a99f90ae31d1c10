//! Sorted run files of fixed-width big-endian simplex records and a k-way
//! merge over them.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

pub(crate) const IO_BUFFER: usize = 32 * 1024;

pub(crate) type RecordIter = Box<dyn Iterator<Item = io::Result<u128>> + Send>;

/// Writes to `<path>.tmp` and renames into place on [`RunWriter::finish`].
pub(crate) struct RunWriter {
    out: BufWriter<File>,
    width: usize,
    count: u64,
    tmp: PathBuf,
    path: PathBuf,
}

impl RunWriter {
    pub(crate) fn create(path: &Path, width: usize) -> io::Result<Self> {
        let tmp = path.with_extension("tmp");
        let out = BufWriter::with_capacity(IO_BUFFER, File::create(&tmp)?);
        Ok(Self { out, width, count: 0, tmp, path: path.to_path_buf() })
    }

    #[inline]
    pub(crate) fn push(&mut self, word: u128) -> io::Result<()> {
        self.count += 1;
        self.out.write_all(&word.to_be_bytes()[16 - self.width..])
    }

    /// Flushes, syncs and publishes the file. Returns the record count.
    pub(crate) fn finish(self) -> io::Result<u64> {
        let file = self.out.into_inner().map_err(|e| e.into_error())?;
        file.sync_all()?;
        drop(file);
        fs::rename(&self.tmp, &self.path)?;
        Ok(self.count)
    }
}

pub(crate) struct RunReader {
    input: BufReader<File>,
    width: usize,
}

impl RunReader {
    pub(crate) fn open(path: &Path, width: usize) -> io::Result<Self> {
        Ok(Self { input: BufReader::with_capacity(IO_BUFFER, File::open(path)?), width })
    }
}

impl Iterator for RunReader {
    type Item = io::Result<u128>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut buf = [0u8; 16];
        let slot = &mut buf[16 - self.width..];
        let mut filled = 0;
        while filled < slot.len() {
            match self.input.read(&mut slot[filled..]) {
                Ok(0) if filled == 0 => return None,
                Ok(0) => {
                    return Some(Err(io::Error::new(
                        io::ErrorKind::UnexpectedEof,
                        "run file ends inside a record",
                    )))
                }
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Some(Err(e)),
            }
        }
        Some(Ok(u128::from_be_bytes(buf)))
    }
}

/// Ascending k-way merge of ascending sources, collapsing equal records.
pub(crate) struct DedupMerge {
    sources: Vec<RecordIter>,
    heap: BinaryHeap<Reverse<(u128, usize)>>,
    last: Option<u128>,
    primed: bool,
}

impl DedupMerge {
    pub(crate) fn new(sources: Vec<RecordIter>) -> Self {
        let heap = BinaryHeap::with_capacity(sources.len());
        Self { sources, heap, last: None, primed: false }
    }

    fn pull(&mut self, i: usize) -> io::Result<()> {
        if let Some(v) = self.sources[i].next() {
            self.heap.push(Reverse((v?, i)));
        }
        Ok(())
    }
}

impl Iterator for DedupMerge {
    type Item = io::Result<u128>;

    fn next(&mut self) -> Option<Self::Item> {
        if !self.primed {
            self.primed = true;
            for i in 0..self.sources.len() {
                if let Err(e) = self.pull(i) {
                    return Some(Err(e));
                }
            }
        }
        loop {
            let Reverse((v, i)) = self.heap.pop()?;
            if let Err(e) = self.pull(i) {
                return Some(Err(e));
            }
            if self.last != Some(v) {
                self.last = Some(v);
                return Some(Ok(v));
            }
        }
    }
}
