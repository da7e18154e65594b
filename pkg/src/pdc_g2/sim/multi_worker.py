import logging
import os
import signal
import tempfile
from queue import Empty
from typing import List, Optional

import numpy as np
import torch
import torch.multiprocessing as mp

from .detection import ExperimentConfig, simulate_chunk

logger = logging.getLogger(__name__)


def _partial_path(save_dir, rank):
    return os.path.join(save_dir, f"partial_results_rank_{rank}.pt")


@torch.no_grad()
def worker(rank, task_queue, cfg: ExperimentConfig, cdf: np.ndarray, save_dir):
    torch.set_num_threads(1)
    results = []
    try:
        while True:
            try:
                chunk_index = task_queue.get(timeout=1)
            except Empty:
                break
            chunk = simulate_chunk(cfg, cdf, chunk_index)
            results.append({
                "chunk_index": chunk_index,
                "pulse_index": torch.from_numpy(chunk["pulse_index"]),
                "detector": torch.from_numpy(chunk["detector"]),
                "time_ns": torch.from_numpy(chunk["time_ns"]),
                "counts": torch.from_numpy(chunk["counts"]),
            })
    finally:
        torch.save(results, _partial_path(save_dir, rank))


def run_chunks(cfg: ExperimentConfig, cdf: np.ndarray, threads: int, work_dir: Optional[str] = None) -> List[dict]:
    """
    Simulate every chunk of cfg on `threads` processes. Each worker pulls chunk
    indices off a shared queue and saves its partial list; the parent merges
    them in chunk order.
    """
    if work_dir is None:
        with tempfile.TemporaryDirectory(prefix="pdc_g2_") as tmp:
            return run_chunks(cfg, cdf, threads, tmp)

    ctx = mp.get_context("spawn")
    task_queue = ctx.Queue()
    for c in range(cfg.n_chunks):
        task_queue.put(c)

    world_size = min(threads, cfg.n_chunks)
    processes = []
    try:
        for rank in range(world_size):
            p = ctx.Process(target=worker, args=(rank, task_queue, cfg, cdf, work_dir))
            p.start()
            processes.append(p)
        for p in processes:
            p.join()
    except KeyboardInterrupt:
        logger.warning("interrupted, waiting for workers to save and exit")
        for p in processes:
            p.join(timeout=5)
        raise
    finally:
        for p in processes:
            if p.is_alive():
                logger.warning(f"force terminating worker {p.pid}")
                os.kill(p.pid, signal.SIGTERM)
        task_queue.close()

    chunks = []
    for rank in range(world_size):
        for part in torch.load(_partial_path(work_dir, rank)):
            chunks.append({k: (v.numpy() if torch.is_tensor(v) else v) for k, v in part.items()})
        os.remove(_partial_path(work_dir, rank))

    chunks.sort(key=lambda c: c["chunk_index"])
    if [c["chunk_index"] for c in chunks] != list(range(cfg.n_chunks)):
        raise RuntimeError(f"workers returned {len(chunks)} of {cfg.n_chunks} chunks")
    logger.debug(f"merged {len(chunks)} chunks from {world_size} workers")
    return chunks
