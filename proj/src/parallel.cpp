#include "sdfit/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace sdfit {

namespace {

int g_threads = []() {
  unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(hw, 1u, 16u));
}();

thread_local bool t_inside_pool = false;

// Persistent worker pool. Chunk boundaries are fixed by the caller, so which
// thread runs a chunk never affects results; the pool only avoids spawning
// threads on every batched call. One job runs at a time; each job carries its
// own counters so a worker waking late can only drain an exhausted job.
class WorkerPool {
 public:
  static WorkerPool& instance() {
    static WorkerPool* pool = new WorkerPool();  // leaked: workers never join
    return *pool;
  }

  void run(std::size_t n_chunks, const std::function<void(std::size_t)>& fn) {
    ensure_workers(std::min<int>(g_threads - 1, static_cast<int>(n_chunks) - 1));
    auto job = std::make_shared<Job>();
    job->fn = &fn;
    job->total = n_chunks;
    job->remaining.store(n_chunks, std::memory_order_release);
    {
      std::lock_guard<std::mutex> lock(mutex_);
      job_ = job;
      ++generation_;
    }
    cv_.notify_all();
    drain(*job);
    std::unique_lock<std::mutex> lock(mutex_);
    done_cv_.wait(lock, [&] { return job->remaining.load(std::memory_order_acquire) == 0; });
    job_ = nullptr;
  }

 private:
  struct Job {
    const std::function<void(std::size_t)>* fn = nullptr;
    std::size_t total = 0;
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> remaining{0};
  };

  void ensure_workers(int wanted) {
    if (wanted <= static_cast<int>(workers_.size())) return;
    while (static_cast<int>(workers_.size()) < wanted)
      workers_.emplace_back([this] { worker_loop(); });
  }

  // a claimed chunk below total is always executed, so `remaining` reliably
  // reaches zero; fn outlives the job because run() blocks on exactly that
  void drain(Job& job) {
    for (;;) {
      const std::size_t c = job.next.fetch_add(1, std::memory_order_relaxed);
      if (c >= job.total) return;
      (*job.fn)(c);
      if (job.remaining.fetch_sub(1, std::memory_order_acq_rel) == 1) {
        std::lock_guard<std::mutex> lock(mutex_);
        done_cv_.notify_all();
      }
    }
  }

  void worker_loop() {
    t_inside_pool = true;
    std::uint64_t seen = 0;
    for (;;) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock<std::mutex> lock(mutex_);
        cv_.wait(lock, [&] { return generation_ != seen; });
        seen = generation_;
        job = job_;
      }
      if (job) drain(*job);
    }
  }

  std::mutex mutex_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::vector<std::thread> workers_;
  std::shared_ptr<Job> job_;
  std::uint64_t generation_ = 0;
};

}  // namespace

void set_thread_count(int n) { g_threads = std::max(1, n); }

int thread_count() { return g_threads; }

std::size_t chunk_count(std::size_t count, std::size_t chunk_size) {
  if (count == 0) return 0;
  chunk_size = std::max<std::size_t>(1, chunk_size);
  return (count + chunk_size - 1) / chunk_size;
}

void parallel_chunks(std::size_t count, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  const std::size_t n_chunks = chunk_count(count, chunk_size);
  if (n_chunks == 0) return;
  chunk_size = std::max<std::size_t>(1, chunk_size);

  const std::function<void(std::size_t)> run_range = [&](std::size_t c) {
    const std::size_t b = c * chunk_size;
    fn(b, std::min(count, b + chunk_size), c);
  };

  // serial when it cannot pay off, or when already on a pool thread (no
  // nested jobs)
  if (g_threads <= 1 || n_chunks <= 1 || t_inside_pool) {
    for (std::size_t c = 0; c < n_chunks; ++c) run_range(c);
    return;
  }
  WorkerPool::instance().run(n_chunks, run_range);
}

}  // namespace sdfit
