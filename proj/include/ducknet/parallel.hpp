#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace ducknet {

// Worker pool for data-parallel loops. Results must not depend on the worker
// count, so parallel_for may only be used when every index writes disjoint
// outputs with a fixed per-index computation order.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  int workers() const { return n_workers_; }

  // Runs fn(begin, end) over [0, n) split into contiguous chunks.
  void run(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    if (n_workers_ <= 1 || n == 1) {
      fn(0, n);
      return;
    }
    std::int64_t chunks = std::min<std::int64_t>(n, n_workers_);
    std::int64_t per = (n + chunks - 1) / chunks;
    {
      std::unique_lock<std::mutex> lk(mu_);
      job_ = &fn;
      job_n_ = n;
      job_per_ = per;
      next_chunk_.store(0, std::memory_order_relaxed);
      pending_ = int((n + per - 1) / per);
      ++generation_;
      cv_.notify_all();
    }
    work_loop();  // caller participates
    std::unique_lock<std::mutex> lk(mu_);
    done_cv_.wait(lk, [&] { return pending_ == 0; });
    job_ = nullptr;
  }

  ~ThreadPool() {
    {
      std::unique_lock<std::mutex> lk(mu_);
      stop_ = true;
      cv_.notify_all();
    }
    for (auto& t : threads_) t.join();
  }

 private:
  ThreadPool() {
    n_workers_ = default_workers();
    for (int i = 1; i < n_workers_; ++i)
      threads_.emplace_back([this] { worker_main(); });
  }

  static int default_workers() {
    if (const char* env = std::getenv("DUCKNET_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? int(hc) : 1;
  }

  void worker_main() {
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      work_loop();
    }
  }

  void work_loop() {
    const auto* fn = job_;
    if (!fn) return;
    for (;;) {
      std::int64_t c = next_chunk_.fetch_add(1, std::memory_order_relaxed);
      std::int64_t b = c * job_per_;
      if (b >= job_n_) break;
      std::int64_t e = std::min(job_n_, b + job_per_);
      (*fn)(b, e);
      std::unique_lock<std::mutex> lk(mu_);
      if (--pending_ == 0) done_cv_.notify_all();
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(std::int64_t, std::int64_t)>* job_ = nullptr;
  std::int64_t job_n_ = 0, job_per_ = 0;
  std::atomic<std::int64_t> next_chunk_{0};
  int pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
  int n_workers_ = 1;
};

template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
  ThreadPool::instance().run(n, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t i = b; i < e; ++i) fn(i);
  });
}

}  // namespace ducknet
