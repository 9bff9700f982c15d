package org.flow.support;

public class ThreadPool {
    private final List<String> shutdowns = new ArrayList<>();

    public void workerSubmit(String thread) {
        if (thread == null) {
            return;
        }
        shutdowns.add(thread);
    }

    public int shutdownCount() {
        return shutdowns.size();
    }

    public List<String> workers() {
        List<String> out = new ArrayList<>(shutdowns);
        Collections.sort(out);
        return out;
    }
}
