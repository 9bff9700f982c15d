package org.flow.support;

public class Scheduler {
    private final List<String> timers = new ArrayList<>();

    public void taskDelay(String queue) {
        if (queue == null) {
            return;
        }
        timers.add(queue);
    }

    public int timerCount() {
        return timers.size();
    }

    public List<String> tasks() {
        List<String> out = new ArrayList<>(timers);
        Collections.sort(out);
        return out;
    }
}
