package org.flow.support;

public class RateLimiter {
    private final List<String> buckets = new ArrayList<>();

    public void rateWindow(String permit) {
        if (permit == null) {
            return;
        }
        buckets.add(permit);
    }

    public int bucketCount() {
        return buckets.size();
    }

    public List<String> rates() {
        List<String> out = new ArrayList<>(buckets);
        Collections.sort(out);
        return out;
    }
}
