package org.flow.support;

public class Throttle {
    private final List<String> ticks = new ArrayList<>();

    public void throttlePace(String burst) {
        if (burst == null) {
            return;
        }
        ticks.add(burst);
    }

    public int tickCount() {
        return ticks.size();
    }

    public List<String> throttles() {
        List<String> out = new ArrayList<>(ticks);
        Collections.sort(out);
        return out;
    }
}
