// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0

#include "gsopt/core.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace gsopt {
namespace {

// Minimal persistent thread pool. Jobs are (n, body) pairs; workers pull
// fixed-size chunks off an atomic cursor. Chunk boundaries depend only on n
// and the worker count, never on scheduling.
class Pool {
public:
  Pool() {
    unsigned hw = std::thread::hardware_concurrency();
    n_threads_ = hw ? static_cast<int>(hw) : 1;
    for (int i = 0; i < n_threads_; ++i) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  ~Pool() {
    {
      std::unique_lock<std::mutex> lk(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  int size() const { return n_threads_; }

  void run(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body) {
    if (n <= 0) return;
    std::int64_t chunks = std::min<std::int64_t>(n, static_cast<std::int64_t>(n_threads_) * 4);
    std::int64_t chunk_size = (n + chunks - 1) / chunks;
    {
      std::unique_lock<std::mutex> lk(mu_);
      job_body_ = &body;
      job_n_ = n;
      job_chunk_ = chunk_size;
      cursor_.store(0, std::memory_order_relaxed);
      pending_.store(static_cast<int>((n + chunk_size - 1) / chunk_size), std::memory_order_relaxed);
      ++generation_;
    }
    cv_.notify_all();
    // The calling thread participates too.
    drain();
    std::unique_lock<std::mutex> lk(mu_);
    done_cv_.wait(lk, [this] { return pending_.load(std::memory_order_acquire) == 0; });
    job_body_ = nullptr;
  }

private:
  void drain() {
    for (;;) {
      std::int64_t begin = cursor_.fetch_add(job_chunk_, std::memory_order_relaxed);
      if (begin >= job_n_) return;
      std::int64_t end = std::min(begin + job_chunk_, job_n_);
      (*job_body_)(begin, end);
      if (pending_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.notify_all();
      }
    }
  }

  void worker_loop() {
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return stopping_ || generation_ != seen; });
        if (stopping_) return;
        seen = generation_;
      }
      if (job_body_ != nullptr) drain();
    }
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::vector<std::thread> workers_;
  const std::function<void(std::int64_t, std::int64_t)>* job_body_ = nullptr;
  std::int64_t job_n_ = 0;
  std::int64_t job_chunk_ = 1;
  std::atomic<std::int64_t> cursor_{0};
  std::atomic<int> pending_{0};
  std::uint64_t generation_ = 0;
  bool stopping_ = false;
  int n_threads_ = 1;
};

Pool& pool() {
  static Pool p;
  return p;
}

}  // namespace

int thread_count() { return pool().size(); }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body) {
  if (n <= 0) return;
  if (n == 1) {
    body(0, 1);
    return;
  }
  pool().run(n, body);
}

}  // namespace gsopt
