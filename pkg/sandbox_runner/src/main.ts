/**
 * Sandboxed executor for generated analysis scripts.
 *
 * Speaks a one-shot stdio protocol: exactly one JSON job arrives on
 * stdin, exactly one JSON result leaves on stdout, and the process
 * exits 0 whenever it managed to answer. How the script itself fared
 * never changes the exit code; that travels in the result status.
 *
 * Each job runs in a fresh scratch directory holding a read-only copy
 * of the task database under the alias the script expects to open.
 * The child gets a scrubbed environment, a wall-clock deadline
 * (SIGTERM, then SIGKILL after a grace period), and a resident-memory
 * cap enforced by sampling /proc. Outside Linux the memory cap is not
 * enforced; everything else works the same.
 */

import { spawn } from 'node:child_process';
import { readFileSync } from 'node:fs';
import { chmod, copyFile, mkdir, mkdtemp, readFile, rm, writeFile } from 'node:fs/promises';
import { tmpdir } from 'node:os';
import * as path from 'node:path';

/** Script outcome as reported to the orchestrator. */
type JobStatus = 'ok' | 'timeout' | 'killed_memory' | 'script_error' | 'missing_outputs';

/** One job, as received on stdin. */
interface SandboxJob {
  /** Python source to execute. */
  script: string;
  /** Path to the source database; only a copy is ever exposed. */
  db_file: string;
  /** File name the copy gets inside the scratch directory. */
  db_alias: string;
  /** Wall-clock budget for the script, in seconds. */
  timeout_s: number;
  /** Resident-set cap for the script process, in megabytes. */
  memory_mb: number;
}

/** One result, as written to stdout. */
interface SandboxResult {
  status: JobStatus;
  /** Captured child stdout (tail-trimmed when oversized). */
  stdout: string;
  /** Captured child stderr (tail-trimmed when oversized). */
  stderr: string;
  /** Seconds between spawn and child exit. */
  wall_time_s: number;
  /** Base64 of data.txt when the script produced one. */
  data_txt_b64?: string;
  /** Base64 of figure.pdf when the script produced one. */
  figure_b64?: string;
}

/** How a finished child looked before status classification. */
interface ChildOutcome {
  timedOut: boolean;
  memoryKilled: boolean;
  spawnError: string | null;
  exitCode: number | null;
  signal: NodeJS.Signals | null;
}

const DEFAULT_TIMEOUT_S = 60;
const DEFAULT_MEMORY_MB = 512;
/** Grace between SIGTERM and SIGKILL once the deadline passes. */
const KILL_GRACE_MS = Math.max(100, Number(process.env.SANDBOX_KILL_GRACE_MS ?? 5000));
/** How often the child's resident-set size is sampled. */
const MEM_POLL_MS = Math.max(20, Number(process.env.SANDBOX_MEM_POLL_MS ?? 200));
/** Cap on captured child output, per stream. */
const MAX_CAPTURE_CHARS = Math.max(1024, Number(process.env.SANDBOX_MAX_CAPTURE_CHARS ?? 65536));
/** Interpreter for job scripts. */
const PYTHON = process.env.SANDBOX_PYTHON ?? 'python3';
/**
 * Proxy URL pointing at a closed local port. Proxy-aware HTTP clients
 * fail fast instead of reaching the network. Best-effort only: raw
 * sockets are not blocked here.
 */
const PROXY_BLACKHOLE = 'http://127.0.0.1:9';

/** Keeps the last maxChars of a stream and counts what was dropped. */
class TailBuffer {
  private text = '';
  private dropped = 0;

  constructor(private readonly maxChars: number) {}

  append(chunk: Buffer | string): void {
    this.text += chunk.toString();
    if (this.text.length > this.maxChars) {
      this.dropped += this.text.length - this.maxChars;
      this.text = this.text.slice(this.text.length - this.maxChars);
    }
  }

  value(): string {
    if (this.dropped === 0) {
      return this.text;
    }
    return `[... ${this.dropped} chars dropped ...]` + this.text;
  }
}

async function readStdin(): Promise<string> {
  const chunks: Buffer[] = [];
  for await (const chunk of process.stdin) {
    chunks.push(chunk as Buffer);
  }
  return Buffer.concat(chunks).toString('utf8');
}

/** Validate the raw stdin payload into a job, defaulting the limits. */
function parseJob(raw: string): SandboxJob {
  let parsed: unknown;
  try {
    parsed = JSON.parse(raw);
  } catch (err) {
    throw new Error(`job is not valid JSON: ${err instanceof Error ? err.message : String(err)}`);
  }
  if (typeof parsed !== 'object' || parsed === null || Array.isArray(parsed)) {
    throw new Error('job must be a JSON object');
  }
  const rec = parsed as Record<string, unknown>;
  if (typeof rec.script !== 'string' || rec.script.length === 0) {
    throw new Error('job.script must be a non-empty string');
  }
  if (typeof rec.db_file !== 'string' || rec.db_file.length === 0) {
    throw new Error('job.db_file must be a non-empty string');
  }
  if (typeof rec.db_alias !== 'string' || rec.db_alias.length === 0) {
    throw new Error('job.db_alias must be a non-empty string');
  }
  // the alias becomes a file name inside the scratch dir; no traversal
  if (rec.db_alias !== path.basename(rec.db_alias) || rec.db_alias === '.' || rec.db_alias === '..') {
    throw new Error(`job.db_alias must be a bare file name, got ${JSON.stringify(rec.db_alias)}`);
  }
  const timeoutS = rec.timeout_s === undefined ? DEFAULT_TIMEOUT_S : Number(rec.timeout_s);
  const memoryMb = rec.memory_mb === undefined ? DEFAULT_MEMORY_MB : Number(rec.memory_mb);
  if (!Number.isFinite(timeoutS) || timeoutS <= 0) {
    throw new Error('job.timeout_s must be a positive number');
  }
  if (!Number.isFinite(memoryMb) || memoryMb <= 0) {
    throw new Error('job.memory_mb must be a positive number');
  }
  return {
    script: rec.script,
    db_file: rec.db_file,
    db_alias: rec.db_alias,
    timeout_s: timeoutS,
    memory_mb: memoryMb,
  };
}

/** Minimal environment for the child; nothing from the host leaks in. */
function buildEnv(workdir: string): NodeJS.ProcessEnv {
  return {
    PATH: process.env.PATH ?? '/usr/local/bin:/usr/bin:/bin',
    HOME: workdir,
    TMPDIR: workdir,
    LANG: 'C.UTF-8',
    MPLCONFIGDIR: path.join(workdir, '.mplconfig'),
    PYTHONDONTWRITEBYTECODE: '1',
    PYTHONUNBUFFERED: '1',
    http_proxy: PROXY_BLACKHOLE,
    https_proxy: PROXY_BLACKHOLE,
    HTTP_PROXY: PROXY_BLACKHOLE,
    HTTPS_PROXY: PROXY_BLACKHOLE,
    no_proxy: '',
    NO_PROXY: '',
  };
}

/** Resident-set size of a process in kB, or null when unreadable. */
function sampleRssKb(pid: number | undefined): number | null {
  if (pid === undefined) {
    return null;
  }
  let status: string;
  try {
    status = readFileSync(`/proc/${pid}/status`, 'utf8');
  } catch {
    return null;
  }
  const match = /^VmRSS:\s+(\d+)\s+kB/m.exec(status);
  return match ? Number(match[1]) : null;
}

/** Run the staged script and watch its deadline and memory. */
function execute(
  scriptPath: string,
  workdir: string,
  job: SandboxJob,
  outBuf: TailBuffer,
  errBuf: TailBuffer,
): Promise<ChildOutcome> {
  return new Promise((resolve) => {
    const outcome: ChildOutcome = {
      timedOut: false,
      memoryKilled: false,
      spawnError: null,
      exitCode: null,
      signal: null,
    };
    const child = spawn(PYTHON, [scriptPath], {
      cwd: workdir,
      env: buildEnv(workdir),
      stdio: ['ignore', 'pipe', 'pipe'],
    });

    let settled = false;
    let killTimer: NodeJS.Timeout | null = null;
    const deadline = setTimeout(() => {
      outcome.timedOut = true;
      child.kill('SIGTERM');
      killTimer = setTimeout(() => child.kill('SIGKILL'), KILL_GRACE_MS);
    }, job.timeout_s * 1000);
    const memWatch = setInterval(() => {
      const rssKb = sampleRssKb(child.pid);
      if (rssKb !== null && rssKb > job.memory_mb * 1024) {
        outcome.memoryKilled = true;
        clearInterval(memWatch);
        child.kill('SIGKILL');
      }
    }, MEM_POLL_MS);

    const finish = (): void => {
      if (settled) {
        return;
      }
      settled = true;
      clearTimeout(deadline);
      if (killTimer) {
        clearTimeout(killTimer);
      }
      clearInterval(memWatch);
      resolve(outcome);
    };

    child.stdout?.on('data', (chunk: Buffer) => outBuf.append(chunk));
    child.stderr?.on('data', (chunk: Buffer) => errBuf.append(chunk));
    child.on('error', (err) => {
      outcome.spawnError = err.message;
      finish();
    });
    child.on('close', (code, signal) => {
      outcome.exitCode = code;
      outcome.signal = signal;
      finish();
    });
  });
}

async function readMaybe(file: string): Promise<Buffer | null> {
  try {
    return await readFile(file);
  } catch {
    return null;
  }
}

async function runJob(job: SandboxJob): Promise<SandboxResult> {
  const workdir = await mkdtemp(path.join(tmpdir(), 'analysis-job-'));
  try {
    const outBuf = new TailBuffer(MAX_CAPTURE_CHARS);
    const errBuf = new TailBuffer(MAX_CAPTURE_CHARS);

    const scriptPath = path.join(workdir, 'script.py');
    try {
      await mkdir(path.join(workdir, '.mplconfig'));
      const dbCopy = path.join(workdir, job.db_alias);
      await copyFile(job.db_file, dbCopy);
      await chmod(dbCopy, 0o444);
      await writeFile(scriptPath, job.script, 'utf8');
    } catch (err) {
      // a well-formed job that cannot be staged is a script failure,
      // not a protocol failure; the orchestrator reads it from status
      return {
        status: 'script_error',
        stdout: '',
        stderr: `sandbox setup failed: ${err instanceof Error ? err.message : String(err)}`,
        wall_time_s: 0,
      };
    }

    const started = Date.now();
    const outcome = await execute(scriptPath, workdir, job, outBuf, errBuf);
    const wallTimeS = (Date.now() - started) / 1000;

    const dataTxt = await readMaybe(path.join(workdir, 'data.txt'));
    const figure = await readMaybe(path.join(workdir, 'figure.pdf'));

    let status: JobStatus;
    if (outcome.timedOut) {
      status = 'timeout';
    } else if (outcome.memoryKilled) {
      status = 'killed_memory';
    } else if (outcome.spawnError !== null) {
      status = 'script_error';
    } else if (outcome.exitCode !== 0) {
      status = 'script_error';
    } else if (dataTxt === null || figure === null) {
      status = 'missing_outputs';
    } else {
      status = 'ok';
    }

    let stderrText = errBuf.value();
    if (outcome.spawnError !== null) {
      stderrText = stderrText + (stderrText ? '\n' : '') + `spawn failed: ${outcome.spawnError}`;
    } else if (status === 'script_error' && !stderrText) {
      stderrText = `script exited ${outcome.exitCode ?? `on signal ${outcome.signal ?? 'unknown'}`}`;
    }

    const result: SandboxResult = {
      status,
      stdout: outBuf.value(),
      stderr: stderrText,
      wall_time_s: wallTimeS,
    };
    // partial outputs ride along for diagnosis; only status=ok vouches for them
    if (dataTxt !== null) {
      result.data_txt_b64 = dataTxt.toString('base64');
    }
    if (figure !== null) {
      result.figure_b64 = figure.toString('base64');
    }
    return result;
  } finally {
    await rm(workdir, { recursive: true, force: true });
  }
}

function writeAll(stream: NodeJS.WriteStream, text: string): Promise<void> {
  return new Promise((resolve) => {
    stream.write(text, () => resolve());
  });
}

(async () => {
  let job: SandboxJob;
  try {
    job = parseJob(await readStdin());
  } catch (err) {
    await writeAll(process.stderr, `sandbox-runner: ${err instanceof Error ? err.message : String(err)}\n`);
    process.exit(2);
  }
  try {
    const result = await runJob(job);
    await writeAll(process.stdout, JSON.stringify(result) + '\n');
    process.exit(0);
  } catch (err) {
    await writeAll(
      process.stderr,
      `sandbox-runner: internal failure: ${err instanceof Error ? (err.stack ?? err.message) : String(err)}\n`,
    );
    process.exit(1);
  }
})();
