#include "tln/train.hpp"

#include <cmath>
#include <ostream>

#include "tln/error.hpp"

namespace tln {

void write_metrics(std::ostream& os, const EpochMetrics& m) {
    os << "{\"iteration\":" << m.iteration << ",\"epoch\":" << m.epoch << ",\"lr\":" << m.lr
       << ",\"loss\":" << m.loss << ",\"train_acc\":" << m.train_acc
       << ",\"test_acc\":" << m.test_acc << "}\n";
}

namespace {

// Endless shuffled index stream; every batch has exactly batch_size samples.
class BatchStream {
public:
    BatchStream(std::int64_t n, std::uint64_t seed) : n_(n), rng_(seed) {
        order_.resize(std::size_t(n));
        for (std::int64_t i = 0; i < n; ++i) order_[std::size_t(i)] = i;
        rng_.shuffle(order_);
    }

    std::int64_t next() {
        if (at_ == n_) {
            rng_.shuffle(order_);
            at_ = 0;
        }
        return order_[std::size_t(at_++)];
    }

private:
    std::int64_t n_;
    Rng rng_;
    std::vector<std::int64_t> order_;
    std::int64_t at_ = 0;
};

Tensor stack_images(const std::vector<Tensor>& imgs) {
    const Shape& s = imgs.front().shape;
    Shape batched{std::int64_t(imgs.size())};
    batched.insert(batched.end(), s.begin(), s.end());
    Tensor out = Tensor::zeros(batched);
    const std::size_t per = imgs.front().data.size();
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        std::copy(imgs[i].data.begin(), imgs[i].data.end(), out.data.begin() + i * per);
    }
    return out;
}

}  // namespace

double evaluate(Tln& net, const SampleSet& ds, const Augmentor& aug, std::int64_t batch) {
    if (ds.size() == 0) throw ContractError("evaluate on empty dataset");
    std::int64_t hits = 0;
    for (std::int64_t start = 0; start < ds.size(); start += batch) {
        const std::int64_t take = std::min(batch, ds.size() - start);
        std::vector<Tensor> imgs;
        imgs.reserve(std::size_t(take));
        for (std::int64_t i = 0; i < take; ++i) imgs.push_back(aug.eval(ds.image(start + i)));
        Tape tape;
        Var logits = net.forward(tape, tape.constant(stack_images(imgs)), Mode::Eval);
        const Tensor& z = tape.val(logits);
        const std::int64_t classes = z.shape[1];
        for (std::int64_t i = 0; i < take; ++i) {
            std::int64_t best = 0;
            for (std::int64_t c = 1; c < classes; ++c) {
                if (z.at2(i, c) > z.at2(i, best)) best = c;
            }
            if (best == ds.label(start + i)) ++hits;
        }
    }
    return double(hits) / double(ds.size());
}

TrainResult train(Tln& net, const FreezePlan& plan, const SampleSet& train_set,
                  const SampleSet& test_set, const TrainOptions& options) {
    options.budget.validate();
    options.schedule.validate();
    if (train_set.size() == 0) throw ContractError("training split is empty");

    apply_freeze_plan(net, plan);
    SgdState state = make_sgd_state(net, options.momentum);
    Augmentor aug(options.augment, train_set.data->channel_mean, train_set.data->channel_std);

    const std::int64_t batch = options.budget.batch_size;
    const std::int64_t iters_per_epoch = (train_set.size() + batch - 1) / batch;
    BatchStream stream(train_set.size(), mix_seed(options.seed, 0xba7c));
    Rng aug_rng(mix_seed(options.seed, 0xa06));

    TrainResult result;
    double epoch_loss = 0.0;
    std::int64_t epoch_steps = 0;

    auto flush_epoch = [&](std::int64_t iteration, std::int64_t epoch) {
        EpochMetrics m;
        m.iteration = iteration;
        m.epoch = epoch;
        m.lr = lr_at(options.schedule, epoch);
        m.loss = epoch_steps > 0 ? epoch_loss / double(epoch_steps) : 0.0;
        m.train_acc = options.eval_train ? evaluate(net, train_set, aug, options.eval_batch) : 0.0;
        m.test_acc = test_set.size() > 0 ? evaluate(net, test_set, aug, options.eval_batch) : 0.0;
        if (options.log) write_metrics(*options.log, m);
        result.trace.push_back(m);
        epoch_loss = 0.0;
        epoch_steps = 0;
    };

    for (std::int64_t it = 0; it < options.budget.iterations; ++it) {
        const std::int64_t epoch = it / iters_per_epoch;
        std::vector<Tensor> imgs;
        std::vector<std::int64_t> labels;
        imgs.reserve(std::size_t(batch));
        for (std::int64_t b = 0; b < batch; ++b) {
            const std::int64_t i = stream.next();
            imgs.push_back(aug.train(train_set.image(i), aug_rng));
            labels.push_back(train_set.label(i));
        }

        Tape tape;
        Var logits = net.forward(tape, tape.constant(stack_images(imgs)), Mode::Train, &plan);
        auto loss = tape.softmax_xent(logits, labels);
        const double loss_val = tape.val(loss.loss).data[0];
        if (!std::isfinite(loss_val)) {
            throw NumericError("non-finite loss at iteration " + std::to_string(it), it);
        }
        zero_grads(net);
        tape.backward(loss.loss);
        sgd_step(net, plan, state, lr_at(options.schedule, epoch));

        epoch_loss += loss_val;
        ++epoch_steps;
        const bool epoch_end = (it + 1) % iters_per_epoch == 0;
        const bool last = it + 1 == options.budget.iterations;
        if (epoch_end || last) flush_epoch(it + 1, epoch);
    }
    return result;
}

}  // namespace tln
