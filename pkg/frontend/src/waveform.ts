/**
 * Waveform peaks from WAV bytes fetched with range requests.
 *
 * The client pulls the 44-byte header first to learn the sample layout,
 * then only the byte window covering the visible time span, and bins the
 * samples to one min/max pair per pixel. No full-file download is needed.
 */

import { ServiceClient } from "./api";

export interface WavFormat {
  sampleRate: number;
  channels: number;
  bitsPerSample: number;
  formatCode: number;
  dataOffset: number;
  dataLength: number;
}

export interface PeakColumn {
  min: number;
  max: number;
}

/** Parse the fmt/data layout of a canonical little-endian WAV header. */
export function parseWavHeader(header: ArrayBuffer): WavFormat {
  const view = new DataView(header);
  if (view.getUint32(0, false) !== 0x52494646 /* RIFF */) {
    throw new Error("not a RIFF file");
  }
  let offset = 12;
  let format: Partial<WavFormat> = {};
  while (offset + 8 <= view.byteLength) {
    const chunkId = view.getUint32(offset, false);
    const size = view.getUint32(offset + 4, true);
    if (chunkId === 0x666d7420 /* fmt_ */) {
      format.formatCode = view.getUint16(offset + 8, true);
      format.channels = view.getUint16(offset + 10, true);
      format.sampleRate = view.getUint32(offset + 12, true);
      format.bitsPerSample = view.getUint16(offset + 22, true);
    } else if (chunkId === 0x64617461 /* data */) {
      format.dataOffset = offset + 8;
      format.dataLength = size;
      break;
    }
    offset += 8 + size + (size % 2);
  }
  if (format.dataOffset === undefined || format.sampleRate === undefined) {
    throw new Error("missing fmt or data chunk");
  }
  return format as WavFormat;
}

export function decodeSamples(bytes: ArrayBuffer, format: WavFormat): Float32Array {
  if (format.formatCode === 3 && format.bitsPerSample === 32) {
    return new Float32Array(bytes.slice(0, bytes.byteLength - (bytes.byteLength % 4)));
  }
  if (format.formatCode === 1 && format.bitsPerSample === 16) {
    const ints = new Int16Array(bytes.slice(0, bytes.byteLength - (bytes.byteLength % 2)));
    const out = new Float32Array(ints.length);
    for (let i = 0; i < ints.length; i++) {
      out[i] = ints[i] / 32768;
    }
    return out;
  }
  throw new Error(`unsupported sample format ${format.formatCode}/${format.bitsPerSample}`);
}

/** Min/max binning of interleaved samples into one column per pixel. */
export function binPeaks(samples: Float32Array, channels: number,
                         columns: number): PeakColumn[] {
  const frames = Math.floor(samples.length / channels);
  const out: PeakColumn[] = [];
  for (let col = 0; col < columns; col++) {
    const start = Math.floor((col * frames) / columns);
    const end = Math.max(start + 1, Math.floor(((col + 1) * frames) / columns));
    let min = Infinity;
    let max = -Infinity;
    for (let frame = start; frame < end && frame < frames; frame++) {
      let value = 0;
      for (let channel = 0; channel < channels; channel++) {
        value += samples[frame * channels + channel];
      }
      value /= channels;
      if (value < min) min = value;
      if (value > max) max = value;
    }
    out.push(min <= max ? { min, max } : { min: 0, max: 0 });
  }
  return out;
}

export class WaveformLoader {
  private format: WavFormat | null = null;

  constructor(private client: ServiceClient, private streamId: string) {}

  async header(): Promise<WavFormat> {
    if (!this.format) {
      const head = await this.client.streamBytes(this.streamId, 0, 511);
      this.format = parseWavHeader(head);
    }
    return this.format;
  }

  /** Peaks for [startS, endS), one column per pixel. */
  async peaks(startS: number, endS: number, columns: number): Promise<PeakColumn[]> {
    const format = await this.header();
    const bytesPerFrame = (format.bitsPerSample / 8) * format.channels;
    const firstFrame = Math.max(0, Math.floor(startS * format.sampleRate));
    const lastFrame = Math.ceil(endS * format.sampleRate);
    const begin = format.dataOffset + firstFrame * bytesPerFrame;
    const end = Math.min(format.dataOffset + format.dataLength,
                         format.dataOffset + lastFrame * bytesPerFrame) - 1;
    if (end < begin) {
      return binPeaks(new Float32Array(0), format.channels, columns);
    }
    const bytes = await this.client.streamBytes(this.streamId, begin, end);
    return binPeaks(decodeSamples(bytes, format), format.channels, columns);
  }
}
